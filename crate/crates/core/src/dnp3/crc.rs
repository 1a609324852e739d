//! DNP3 link-layer CRC.
//!
//! Polynomial x^16 + x^13 + x^12 + x^11 + x^10 + x^8 + x^6 + x^5 + x^2 + 1
//! (0x3D65), processed LSB-first (reflected form 0xA6BC), zero initial
//! value, one's-complemented result. The checksum is transmitted
//! low octet first.

const REFLECTED_POLY: u16 = 0xA6BC;

const TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u16;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ REFLECTED_POLY
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// Computes the DNP3 CRC of `data`.
pub fn crc_dnp(data: &[u8]) -> u16 {
    let crc = data.iter().fold(0u16, |crc, &b| {
        (crc >> 8) ^ TABLE[((crc ^ b as u16) & 0xFF) as usize]
    });
    !crc
}

/// Appends the CRC of `data` to `out` in wire order (low octet first).
pub(crate) fn push_crc(out: &mut Vec<u8>, data: &[u8]) {
    out.extend_from_slice(&crc_dnp(data).to_le_bytes());
}
