use misc_multiview::data::{generate_synthetic, save_dataset, SyntheticSpec};
use misc_multiview::model::{Hyperparams, MultiviewDataset};
use misc_multiview::trainer::initialize;
use ndarray::Array2;

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn main() {
    // golden init: seed=0, n=2, d=2, m=1, d_1=2, init_scale=0.01
    let views = vec![Array2::<f64>::zeros((2, 2))];
    let ds = MultiviewDataset::new(views, Some(vec![1, -1])).unwrap();
    let mut hp = Hyperparams::for_view_dims(&[2]);
    hp.d = 2;
    hp.seed = 0;
    hp.init_scale = 0.01;
    let state = initialize(&ds, &hp).unwrap();
    println!("z = {:?}", state.z);
    println!("w = {:?}", state.w[0]);
    println!("omega = {:?}", state.omega);
    println!("beta = {:?}", state.beta);

    // golden dataset checksum: acceptance spec
    let spec = SyntheticSpec {
        n: 200, m: 3, d: 5, view_dims: vec![8, 8, 8],
        n_classes: 2, noise_sigma: 0.01, margin: 0.5, seed: 7,
    };
    let (dataset, _) = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&dataset, dir.path()).unwrap();
    let mut hash = 0xcbf29ce484222325u64;
    for name in ["manifest", "view_1.csv", "view_2.csv", "view_3.csv", "labels.csv"] {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        hash = fnv1a(&bytes, hash);
    }
    println!("dataset_fnv1a = {hash:#018x}");
    let labels = dataset.labels.as_ref().unwrap();
    println!("positives = {}", labels.iter().filter(|&&l| l == 1).count());
}
