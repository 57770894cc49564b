//! Load or synthesize a dataset, split it, scale it, partition it across
//! clients and fingerprint each partition.
//!
//! ```text
//! cargo run --example data_pipeline [-- path/to.csv label_column]
//! ```

use wssl::data::{
    batch_iter, hash_partition, load_csv, standard_scale_apply, standard_scale_fit, stratified_partition,
    synth_blobs, train_test_split, LabelColumn,
};

fn main() -> wssl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ds = match args.as_slice() {
        [path, label] => load_csv(path, &LabelColumn::from(label.as_str()))?,
        _ => synth_blobs(500, 6, 3, 5.0, 42)?,
    };
    println!("{} rows, {} features, class counts {:?}", ds.len(), ds.dim(), ds.class_counts());

    let (train, test) = train_test_split(&ds, 0.8, 1)?;
    let scaler = standard_scale_fit(&train);
    let (train, test) = (standard_scale_apply(&scaler, &train)?, standard_scale_apply(&scaler, &test)?);
    println!("train {:?} / validation {:?}", train.class_counts(), test.class_counts());

    for (id, part) in stratified_partition(&train, 4, 2)?.iter().enumerate() {
        let digest = hash_partition(id as u32, part);
        let batches: Vec<usize> = batch_iter(part, 32, true, id as u64).map(|b| b.len()).collect();
        println!("client {id}: classes {:?}, batches {batches:?}, sha256 {}", part.class_counts(), digest.hex());
    }
    Ok(())
}
