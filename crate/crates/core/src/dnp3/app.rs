use serde::{Deserialize, Serialize};

use super::CodecError;

/// Application function codes exercised by the testbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FunctionCode {
    Confirm,
    Read,
    Read2,
    Select,
    Operate,
    DirectOperate,
    SolicitedResponse,
    UnsolicitedResponse,
}

impl FunctionCode {
    pub const ALL: [FunctionCode; 8] = [
        FunctionCode::Confirm,
        FunctionCode::Read,
        FunctionCode::Read2,
        FunctionCode::Select,
        FunctionCode::Operate,
        FunctionCode::DirectOperate,
        FunctionCode::SolicitedResponse,
        FunctionCode::UnsolicitedResponse,
    ];

    pub fn as_u8(self) -> u8 {
        match self {
            FunctionCode::Confirm => 0x00,
            FunctionCode::Read => 0x01,
            FunctionCode::Read2 => 0x02,
            FunctionCode::Select => 0x03,
            FunctionCode::Operate => 0x04,
            FunctionCode::DirectOperate => 0x05,
            FunctionCode::SolicitedResponse => 0x81,
            FunctionCode::UnsolicitedResponse => 0x82,
        }
    }

    pub fn from_u8(x: u8) -> Result<Self, CodecError> {
        Ok(match x {
            0x00 => FunctionCode::Confirm,
            0x01 => FunctionCode::Read,
            0x02 => FunctionCode::Read2,
            0x03 => FunctionCode::Select,
            0x04 => FunctionCode::Operate,
            0x05 => FunctionCode::DirectOperate,
            0x81 => FunctionCode::SolicitedResponse,
            0x82 => FunctionCode::UnsolicitedResponse,
            other => return Err(CodecError::UnknownFunctionCode(other)),
        })
    }

    pub fn is_response(self) -> bool {
        matches!(
            self,
            FunctionCode::SolicitedResponse | FunctionCode::UnsolicitedResponse
        )
    }

    /// Select, operate or direct-operate.
    pub fn is_control(self) -> bool {
        matches!(
            self,
            FunctionCode::Select | FunctionCode::Operate | FunctionCode::DirectOperate
        )
    }
}

/// CROB control codes.
///
/// Octet encodings follow the trip/close pair field in the upper two
/// bits combined with the operation type in the lower nibble:
/// TRIP = 0x81 (trip, pulse on), CLOSE = 0x41 (close, pulse on),
/// LATCH_ON = 0x03, LATCH_OFF = 0x04.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlCode {
    Trip,
    Close,
    LatchOn,
    LatchOff,
}

impl ControlCode {
    pub fn as_u8(self) -> u8 {
        match self {
            ControlCode::Trip => 0x81,
            ControlCode::Close => 0x41,
            ControlCode::LatchOn => 0x03,
            ControlCode::LatchOff => 0x04,
        }
    }

    pub fn from_u8(x: u8) -> Result<Self, CodecError> {
        Ok(match x {
            0x81 => ControlCode::Trip,
            0x41 => ControlCode::Close,
            0x03 => ControlCode::LatchOn,
            0x04 => ControlCode::LatchOff,
            other => return Err(CodecError::UnknownControlCode(other)),
        })
    }

    /// Whether the code asks for the controlled device to be energised.
    pub fn closes(self) -> bool {
        matches!(self, ControlCode::Close | ControlCode::LatchOn)
    }
}

/// Command status echoed back in control responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandStatus {
    Success,
    Timeout,
    NoSelect,
    FormatError,
    NotSupported,
}

impl CommandStatus {
    pub fn as_u8(self) -> u8 {
        match self {
            CommandStatus::Success => 0,
            CommandStatus::Timeout => 1,
            CommandStatus::NoSelect => 2,
            CommandStatus::FormatError => 3,
            CommandStatus::NotSupported => 4,
        }
    }

    fn from_u8(x: u8) -> Result<Self, CodecError> {
        Ok(match x {
            0 => CommandStatus::Success,
            1 => CommandStatus::Timeout,
            2 => CommandStatus::NoSelect,
            3 => CommandStatus::FormatError,
            4 => CommandStatus::NotSupported,
            other => return Err(CodecError::UnknownStatus(other)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PointKind {
    BinaryInput,
    AnalogInput,
    BinaryOutputCommand,
    AnalogOutputCommand,
}

impl PointKind {
    /// (group, variation) used on the wire.
    fn object_header(self) -> (u8, u8) {
        match self {
            PointKind::BinaryInput => (1, 2),
            PointKind::AnalogInput => (30, 6),
            PointKind::BinaryOutputCommand => (12, 1),
            PointKind::AnalogOutputCommand => (41, 4),
        }
    }

    fn from_object_header(group: u8, variation: u8) -> Result<Self, CodecError> {
        Ok(match (group, variation) {
            (1, 2) => PointKind::BinaryInput,
            (30, 6) => PointKind::AnalogInput,
            (12, 1) => PointKind::BinaryOutputCommand,
            (41, 4) => PointKind::AnalogOutputCommand,
            _ => return Err(CodecError::UnknownObject { group, variation }),
        })
    }

    pub fn is_output(self) -> bool {
        matches!(
            self,
            PointKind::BinaryOutputCommand | PointKind::AnalogOutputCommand
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PointValue {
    Binary(bool),
    Analog(f64),
    Control {
        code: ControlCode,
        status: CommandStatus,
    },
    Setpoint {
        value: f64,
        status: CommandStatus,
    },
}

impl PointValue {
    pub fn kind(&self) -> PointKind {
        match self {
            PointValue::Binary(_) => PointKind::BinaryInput,
            PointValue::Analog(_) => PointKind::AnalogInput,
            PointValue::Control { .. } => PointKind::BinaryOutputCommand,
            PointValue::Setpoint { .. } => PointKind::AnalogOutputCommand,
        }
    }

    pub fn status(&self) -> Option<CommandStatus> {
        match self {
            PointValue::Control { status, .. } | PointValue::Setpoint { status, .. } => {
                Some(*status)
            }
            _ => None,
        }
    }
}

/// One object header's worth of points, canonical when indices strictly
/// increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointGroup {
    pub kind: PointKind,
    pub points: Vec<(u16, PointValue)>,
}

impl PointGroup {
    pub fn new(kind: PointKind) -> Self {
        Self {
            kind,
            points: Vec::new(),
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.points.windows(2).all(|w| w[0].0 < w[1].0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AppControl {
    pub first: bool,
    pub fin: bool,
    pub confirm: bool,
    pub unsolicited: bool,
    /// 0..=15
    pub seq: u8,
}

impl AppControl {
    /// Single-fragment message with the given sequence number.
    pub fn single(seq: u8) -> Self {
        Self {
            first: true,
            fin: true,
            confirm: false,
            unsolicited: false,
            seq: seq & 0x0F,
        }
    }

    fn as_u8(self) -> u8 {
        (self.first as u8) << 7
            | (self.fin as u8) << 6
            | (self.confirm as u8) << 5
            | (self.unsolicited as u8) << 4
            | (self.seq & 0x0F)
    }

    fn from_u8(x: u8) -> Self {
        Self {
            first: x & 0x80 != 0,
            fin: x & 0x40 != 0,
            confirm: x & 0x20 != 0,
            unsolicited: x & 0x10 != 0,
            seq: x & 0x0F,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppFragment {
    pub control: AppControl,
    pub function: FunctionCode,
    /// Internal indications; present on responses only.
    pub iin: Option<u16>,
    pub objects: Vec<PointGroup>,
}

impl AppFragment {
    pub fn request(seq: u8, function: FunctionCode, objects: Vec<PointGroup>) -> Self {
        Self {
            control: AppControl::single(seq),
            function,
            iin: None,
            objects,
        }
    }

    pub fn response(seq: u8, objects: Vec<PointGroup>) -> Self {
        Self {
            control: AppControl::single(seq),
            function: FunctionCode::SolicitedResponse,
            iin: Some(0),
            objects,
        }
    }

    /// All points across every group, in wire order.
    pub fn points(&self) -> impl Iterator<Item = (PointKind, u16, &PointValue)> {
        self.objects
            .iter()
            .flat_map(|g| g.points.iter().map(move |(i, v)| (g.kind, *i, v)))
    }
}

const QUALIFIER_INDEXED: u8 = 0x28;

fn value_len(kind: PointKind) -> usize {
    match kind {
        PointKind::BinaryInput => 1,
        PointKind::AnalogInput => 9,
        PointKind::BinaryOutputCommand => 11,
        PointKind::AnalogOutputCommand => 9,
    }
}

/// Octet offset of each point's value within an encoded fragment, in the
/// same order as [`AppFragment::points`]. Lets in-path rewriters patch a
/// value without re-serialising.
pub fn value_offsets(fragment: &AppFragment) -> Vec<usize> {
    let mut pos = if fragment.iin.is_some() { 4 } else { 2 };
    let mut out = Vec::new();
    for g in &fragment.objects {
        pos += 5;
        for _ in &g.points {
            pos += 2;
            out.push(pos);
            pos += value_len(g.kind);
        }
    }
    out
}

pub fn encode_app(fragment: &AppFragment) -> Result<Vec<u8>, CodecError> {
    match (fragment.function.is_response(), fragment.iin) {
        (true, None) => return Err(CodecError::MissingIin),
        (false, Some(_)) => return Err(CodecError::UnexpectedIin),
        _ => {}
    }
    let mut out = vec![fragment.control.as_u8(), fragment.function.as_u8()];
    if let Some(iin) = fragment.iin {
        out.extend_from_slice(&iin.to_le_bytes());
    }
    for group in &fragment.objects {
        if !group.is_canonical() {
            return Err(CodecError::NonCanonical);
        }
        let (g, v) = group.kind.object_header();
        out.extend_from_slice(&[g, v, QUALIFIER_INDEXED]);
        out.extend_from_slice(&(group.points.len() as u16).to_le_bytes());
        for (index, value) in &group.points {
            if value.kind() != group.kind {
                return Err(CodecError::ValueKindMismatch);
            }
            out.extend_from_slice(&index.to_le_bytes());
            encode_value(&mut out, value);
        }
    }
    Ok(out)
}

fn encode_value(out: &mut Vec<u8>, value: &PointValue) {
    match *value {
        PointValue::Binary(state) => out.push(0x01 | if state { 0x80 } else { 0 }),
        PointValue::Analog(x) => {
            out.push(0x01);
            out.extend_from_slice(&x.to_le_bytes());
        }
        PointValue::Control { code, status } => {
            out.push(code.as_u8());
            out.push(1);
            out.extend_from_slice(&0u32.to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            out.push(status.as_u8());
        }
        PointValue::Setpoint { value, status } => {
            out.extend_from_slice(&value.to_le_bytes());
            out.push(status.as_u8());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 octets")))
    }
}

pub fn decode_app(octets: &[u8]) -> Result<AppFragment, CodecError> {
    let mut r = Reader { buf: octets };
    let control = AppControl::from_u8(r.u8()?);
    let function = FunctionCode::from_u8(r.u8()?)?;
    let iin = if function.is_response() {
        Some(r.u16()?)
    } else {
        None
    };
    let mut objects = Vec::new();
    while !r.buf.is_empty() {
        let group = r.u8()?;
        let variation = r.u8()?;
        let kind = PointKind::from_object_header(group, variation)?;
        let qualifier = r.u8()?;
        if qualifier != QUALIFIER_INDEXED {
            return Err(CodecError::BadQualifier(qualifier));
        }
        let count = r.u16()?;
        let mut points = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let index = r.u16()?;
            let value = match kind {
                PointKind::BinaryInput => PointValue::Binary(r.u8()? & 0x80 != 0),
                PointKind::AnalogInput => {
                    r.u8()?;
                    PointValue::Analog(r.f64()?)
                }
                PointKind::BinaryOutputCommand => {
                    let code = ControlCode::from_u8(r.u8()?)?;
                    r.take(9)?;
                    let status = CommandStatus::from_u8(r.u8()?)?;
                    PointValue::Control { code, status }
                }
                PointKind::AnalogOutputCommand => {
                    let value = r.f64()?;
                    let status = CommandStatus::from_u8(r.u8()?)?;
                    PointValue::Setpoint { value, status }
                }
            };
            points.push((index, value));
        }
        let group = PointGroup { kind, points };
        if !group.is_canonical() {
            return Err(CodecError::NonCanonical);
        }
        objects.push(group);
    }
    Ok(AppFragment {
        control,
        function,
        iin,
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crob(index: u16, code: ControlCode) -> AppFragment {
        AppFragment::request(
            3,
            FunctionCode::DirectOperate,
            vec![PointGroup {
                kind: PointKind::BinaryOutputCommand,
                points: vec![(
                    index,
                    PointValue::Control {
                        code,
                        status: CommandStatus::Success,
                    },
                )],
            }],
        )
    }

    #[test]
    fn function_octets() {
        let bytes = encode_app(&crob(5, ControlCode::Close)).unwrap();
        assert_eq!(bytes[1], 0x05);
        let resp = encode_app(&AppFragment::response(3, vec![])).unwrap();
        assert_eq!(resp[1], 0x81);
    }

    #[test]
    fn function_code_table_is_bijective() {
        for f in FunctionCode::ALL {
            assert_eq!(FunctionCode::from_u8(f.as_u8()).unwrap(), f);
        }
        let known: Vec<u8> = FunctionCode::ALL.iter().map(|f| f.as_u8()).collect();
        for x in 0..=255u8 {
            assert_eq!(FunctionCode::from_u8(x).is_ok(), known.contains(&x));
        }
    }

    #[test]
    fn unknown_function_rejected() {
        assert_eq!(
            decode_app(&[0xC0, 0x17]),
            Err(CodecError::UnknownFunctionCode(0x17))
        );
    }

    #[test]
    fn control_codes_distinct() {
        let all = [
            ControlCode::Trip,
            ControlCode::Close,
            ControlCode::LatchOn,
            ControlCode::LatchOff,
        ];
        for a in all {
            assert_eq!(ControlCode::from_u8(a.as_u8()).unwrap(), a);
            for b in all {
                assert_eq!(a == b, a.as_u8() == b.as_u8());
            }
        }
    }

    #[test]
    fn iin_presence_enforced() {
        let mut req = crob(1, ControlCode::Trip);
        req.iin = Some(0);
        assert_eq!(encode_app(&req), Err(CodecError::UnexpectedIin));
        let mut resp = AppFragment::response(0, vec![]);
        resp.iin = None;
        assert_eq!(encode_app(&resp), Err(CodecError::MissingIin));
    }

    #[test]
    fn non_canonical_indices_rejected() {
        let g = PointGroup {
            kind: PointKind::BinaryInput,
            points: vec![
                (4, PointValue::Binary(true)),
                (4, PointValue::Binary(false)),
            ],
        };
        let f = AppFragment::response(0, vec![g]);
        assert_eq!(encode_app(&f), Err(CodecError::NonCanonical));
    }

    #[test]
    fn value_offsets_point_at_values() {
        let f = AppFragment::response(
            1,
            vec![
                PointGroup {
                    kind: PointKind::BinaryInput,
                    points: vec![(0, PointValue::Binary(true))],
                },
                PointGroup {
                    kind: PointKind::AnalogInput,
                    points: vec![(2, PointValue::Analog(12.5)), (7, PointValue::Analog(-3.0))],
                },
            ],
        );
        let bytes = encode_app(&f).unwrap();
        let offs = value_offsets(&f);
        assert_eq!(bytes[offs[0]], 0x81);
        let v = f64::from_le_bytes(bytes[offs[2] + 1..offs[2] + 9].try_into().unwrap());
        assert_eq!(v, -3.0);
    }
}
