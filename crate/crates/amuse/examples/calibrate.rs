use amuse::data::synthetic_gaussian;
use amuse::exp::{run_many, ProbeSet, RunSpec};
use amuse::optim::{AuxKind, OptimizerConfig, OptimizerKind};
use std::time::Instant;

fn base_spec(name: &str, opt: OptimizerConfig, seed: u64, steps: u64) -> RunSpec {
    let mut spec = RunSpec::new(name, opt);
    spec.model_dims = vec![64, 200, 200, 10];
    spec.seed = seed;
    spec.steps = steps;
    spec.batch_size = 50;
    spec.probes = ProbeSet { subspace: true, grad_alpha: false, norms: true, cosine: true };
    spec.probe_cadence = 100;
    spec.probe_start = 100;
    spec.lanczos_iters = 60;
    spec.checkpoint_cadence = None;
    spec
}

fn main() {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let ds = synthetic_gaussian(42, 5000, 64, 10, 3.0).unwrap();
    let muon = OptimizerConfig { kind: OptimizerKind::Muon, lr: 1e-3, muon_momentum: 0.9, sgd_momentum: 0.9, aux_kind: AuxKind::Sgd, ..Default::default() };
    let sgd = OptimizerConfig { kind: OptimizerKind::Sgd, lr: 1e-2, sgd_momentum: 0.0, ..Default::default() };
    let adamw = OptimizerConfig { kind: OptimizerKind::Adamw, lr: 5e-4, adamw_beta1: 0.9, adamw_beta2: 0.99, ..Default::default() };

    let specs: Vec<RunSpec> = vec![
        base_spec("cal", muon, 0, steps),
        base_spec("cal", sgd, 0, steps),
        base_spec("cal", adamw, 0, steps),
    ];
    let t0 = Instant::now();
    let outs = run_many(&specs, &ds, None).unwrap();
    println!("3 runs x {steps} steps: {:.1}s", t0.elapsed().as_secs_f64());
    for (spec, out) in specs.iter().zip(&outs) {
        let mean_up = out.mean_over(100, steps, |r| r.r_dom_update);
        let mean_g = out.mean_over(100, steps, |r| r.r_dom_grad);
        let final_loss = out.final_eval_loss();
        println!("{:8} mean r_dom(update) {:.4} r_dom(grad) {:.4} final loss {:.4}",
            spec.optimizer.kind.name(), mean_up, mean_g, final_loss);
        if !out.subspace_rows.is_empty() {
            let mm: f64 = out.subspace_rows.iter().map(|r| r.r_dom_momentum).sum::<f64>() / out.subspace_rows.len() as f64;
            let mo: f64 = out.subspace_rows.iter().map(|r| r.r_dom_orth).sum::<f64>() / out.subspace_rows.len() as f64;
            println!("         mean r_dom(M_t) {mm:.4} vs r_dom(O(M_t)) {mo:.4}");
        }
    }
}
