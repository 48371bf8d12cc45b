//! Input framing shared by the fuzz targets.

/// Splits `data` into `n` frames, each a little-endian `u32` length followed
/// by that many bytes. The last frame takes whatever remains.
pub fn frames(mut data: &[u8], n: usize) -> Option<Vec<&[u8]>> {
    let mut out = Vec::with_capacity(n);
    for _ in 1..n {
        let len = u32::from_le_bytes(data.get(..4)?.try_into().ok()?) as usize;
        let body = data.get(4..4usize.checked_add(len)?)?;
        out.push(body);
        data = &data[4 + len..];
    }
    out.push(data);
    Some(out)
}

/// Inverse of [`frames`], used to build corpus seeds.
pub fn join(parts: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    let (last, head) = parts.split_last().expect("at least one part");
    for p in head {
        out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        out.extend_from_slice(p);
    }
    out.extend_from_slice(last);
    out
}
