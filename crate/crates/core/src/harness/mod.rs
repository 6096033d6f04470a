//! Softmax baseline, synthetic data, scaling benchmark and the quick
//! equivalence suite.

mod bench;
mod demo;
mod equiv;
mod softmax;
mod synth;

pub use bench::{read_bench_csv, run_scaling_bench, summarize, write_bench_csv, BenchConfig, BenchMode, BenchRecord, BenchReport, BenchSummary};
pub use demo::{run_demo, DemoConfig, DemoResult};
pub use equiv::{run_equiv_suite, Check};
pub use softmax::SoftmaxAttention;
pub use synth::{gen_scene, gen_synthetic_frames, gen_trajectory_dataset, unicycle};
