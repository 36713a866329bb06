// Dev helper: regenerates the frozen ground-truth values.
use quadmed_core::dgp::{oracle_theta, DgpSpec, Setting};

fn main() {
    let cases = [
        (Setting::Ex1, 3usize, 1usize, 901u64),
        (Setting::S1, 41, 10, 902),
        (Setting::S2, 41, 10, 903),
        (Setting::S3, 50, 1, 904),
    ];
    for (setting, d1, d2, seed) in cases {
        let spec = DgpSpec::new(setting, 100, d1, d2, 0);
        let (theta, se) = oracle_theta(&spec, 10_000_000, seed).unwrap();
        println!("{}: theta={theta:.6} mc_se={se:.6} seed={seed} n_mc=1e7", setting.name());
    }
}
