//! Load an IDX image/label pair (the MNIST file format).
//!
//! With no arguments a small pair of files is written to a temporary
//! directory first; otherwise pass `<images> <labels>`.

use std::path::PathBuf;

use plsprune::data::load_idx;

fn write_demo_files() -> std::io::Result<(PathBuf, PathBuf)> {
    let dir = std::env::temp_dir().join("plsprune-idx-example");
    std::fs::create_dir_all(&dir)?;
    let (n, h, w) = (4u32, 6u32, 6u32);
    let mut images = vec![0, 0, 0x08, 0x03];
    for v in [n, h, w] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..n * h * w {
        images.push(((i * 37) % 256) as u8);
    }
    let mut labels = vec![0, 0, 0x08, 0x01];
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend_from_slice(&[0, 1, 2, 1]);
    let (ip, lp) = (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"));
    std::fs::write(&ip, images)?;
    std::fs::write(&lp, labels)?;
    Ok((ip, lp))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (images, labels) = match args.as_slice() {
        [i, l] => (PathBuf::from(i), PathBuf::from(l)),
        _ => write_demo_files()?,
    };
    let ds = load_idx(&images, &labels)?;
    println!(
        "{} samples of shape {}, {} classes",
        ds.len(),
        ds.shape(),
        ds.class_count
    );
    println!("class counts: {:?}", ds.class_counts());
    let first = ds.images.sample(0);
    println!("first pixels of sample 0: {:?}", &first[..6.min(first.len())]);
    Ok(())
}
