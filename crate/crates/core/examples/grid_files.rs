//! Writing and reading `.cngrid` files, and what a malformed one reports.

use keytriplet::grid::DenseGrid;
use keytriplet::io::{decode_grid, encode_grid, load_grid, save_named_grid};

fn main() -> keytriplet::Result<()> {
    let values: Vec<f32> = (0..2 * 3 * 4).map(|v| v as f32 * 0.125).collect();
    let grid = DenseGrid::from_vec(2, 3, 4, values)?;

    let bytes = encode_grid(&grid, Some("tl_heat"));
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    println!("magic   {:?}", String::from_utf8_lossy(&bytes[..8]));
    println!("header  {}", String::from_utf8_lossy(&bytes[12..12 + header_len]));
    println!("payload {} bytes", bytes.len() - 12 - header_len);

    let (back, name) = decode_grid(&bytes)?;
    assert_eq!(back, grid);
    println!("decoded {:?} named {:?}", back.shape(), name);

    let dir = std::env::temp_dir().join("keytriplet-grid-files");
    let path = dir.join("tl_heat.cngrid");
    save_named_grid(&grid, Some("tl_heat"), &path)?;
    assert_eq!(load_grid(&path)?, grid);
    println!("round trip through {}", path.display());

    let mut truncated = bytes.clone();
    truncated.truncate(bytes.len() - 3);
    println!("truncated: {}", decode_grid(&truncated).unwrap_err());
    let mut bad_magic = bytes;
    bad_magic[0] = b'X';
    println!("bad magic: {}", decode_grid(&bad_magic).unwrap_err());
    Ok(())
}
