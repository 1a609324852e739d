//! Builds a Direct Operate request for one breaker, frames it, and shows
//! what a CLOSE-to-TRIP rewrite looks like on the wire.

use scada_cosim::dnp3::{
    crc_dnp, decode_frame, decode_message, encode_message, recompute_crcs, AppFragment,
    CommandStatus, ControlCode, FunctionCode, LinkHeader, Message, PointGroup, PointKind,
    PointValue, CONTROL_MASTER_DATA, MAX_PAYLOAD,
};

fn main() {
    let mut group = PointGroup::new(PointKind::BinaryOutputCommand);
    group.points.push((
        9,
        PointValue::Control {
            code: ControlCode::Close,
            status: CommandStatus::Success,
        },
    ));
    let msg = Message {
        header: LinkHeader {
            control: CONTROL_MASTER_DATA,
            destination: 100,
            source: 1,
        },
        transport_seq: 0,
        fragment: AppFragment::request(3, FunctionCode::DirectOperate, vec![group]),
    };
    let octets = encode_message(&msg).unwrap();
    println!("{} octets: {}", octets.len(), hex::encode(&octets));
    println!("CRC of \"123456789\" = {:#06x}", crc_dnp(b"123456789"));

    // Flip the control code in place, then repair the block CRCs.
    let close = ControlCode::Close.as_u8();
    let mut forged = octets.clone();
    let pos = forged.iter().rposition(|&b| b == close).unwrap();
    forged[pos] = ControlCode::Trip.as_u8();
    println!("stale CRCs:    {:?}", decode_frame(&forged).map(|_| ()));
    recompute_crcs(&mut forged).unwrap();
    let back = decode_message(&forged).unwrap();
    for (kind, index, value) in back.fragment.points() {
        println!(
            "repaired:      {kind:?} {index} {value:?} seq {}",
            back.fragment.control.seq
        );
    }

    let header = msg.header;
    let too_big = scada_cosim::dnp3::encode_frame(&header, &vec![0; MAX_PAYLOAD + 1]);
    println!(
        "{}-octet payload: {:?}",
        MAX_PAYLOAD + 1,
        too_big.unwrap_err()
    );
}
