//! Runs the extraction pipeline over a freshly drawn corpus and reports peg
//! and scale errors against ground truth.
//!
//! cargo run --release -p veinroi-core --example corpus_eval -- [n] [seed] [width] [height]

use std::time::Instant;

use veinroi::profile::IlluminationProfile;
use veinroi::roi::extract;
use veinroi::synth::{render_scene, CorpusOptions};

fn main() {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let n = *args.first().unwrap_or(&200) as usize;
    let seed = *args.get(1).unwrap_or(&1);
    let width = *args.get(2).unwrap_or(&1000) as u32;
    let height = *args.get(3).unwrap_or(&667) as u32;
    let opts = CorpusOptions {
        n,
        seed,
        width,
        height,
        ..Default::default()
    };
    let mut ok = 0;
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut elapsed = 0.0;
    for (i, spec) in veinroi::synth::draw_corpus_specs(&opts)
        .unwrap()
        .iter()
        .enumerate()
    {
        let (img, truth) = render_scene(spec).unwrap();
        let t = Instant::now();
        let res = extract(
            &img,
            &IlluminationProfile::for_illumination(spec.illumination),
        );
        elapsed += t.elapsed().as_secs_f64();
        match res {
            Ok(r) => {
                let found = [r.pegs.left, r.pegs.right];
                let mut dc = 0.0f64;
                let mut dr = 0.0f64;
                for c in truth.peg_centers {
                    let best = found
                        .iter()
                        .map(|h| {
                            (
                                (h.cx - c.0).hypot(h.cy - c.1),
                                (h.r - truth.peg_radius).abs(),
                            )
                        })
                        .min_by(|a, b| a.0.total_cmp(&b.0))
                        .unwrap();
                    dc = dc.max(best.0);
                    dr = dr.max(best.1);
                }
                let ds = (r.scale / truth.true_scale - 1.0).abs();
                worst = (worst.0.max(dc), worst.1.max(dr), worst.2.max(ds));
                if dc <= 2.0 && dr <= 2.0 {
                    ok += 1;
                } else {
                    println!(
                        "scene {i} {:?}: center err {dc:.2} radius err {dr:.2} hits {}",
                        spec.illumination,
                        r.hits.len()
                    );
                }
            }
            Err(e) => println!("scene {i} {:?}: {e}", spec.illumination),
        }
    }
    println!(
        "{ok}/{n} within 2 px; worst center {:.2} radius {:.2} scale {:.3}; {:.1} ms/image",
        worst.0,
        worst.1,
        worst.2,
        1000.0 * elapsed / n as f64
    );
}
