//! Scratch calibration driver: measures wall time and learning behaviour of
//! the training loops at the experiment sizes used by the test suite.

use chanmgr_core::baselines::{dnn_train, evaluate_random, evaluate_relaxed, relaxed_gnn_train};
use chanmgr_core::graph::Topology;
use chanmgr_core::interference::zero_interference_oracle;
use chanmgr_core::policy::ActionSpace;
use chanmgr_core::training::{evaluate, train, EvalMode, TrainConfig};
use std::time::Instant;

fn fig3_graph(seed: u64) -> (Topology, u64) {
    // first 4-colorable ER(10, 0.25) graph at or after `seed`
    let mut s = seed;
    loop {
        let topo = Topology::gen_er_graph(10, 0.25, s).unwrap();
        if zero_interference_oracle(&topo, 4).unwrap().achievable {
            return (topo, s);
        }
        s += 1;
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "fig3".into());
    match mode.as_str() {
        "fig3" => fig3(),
        "fig3one" => fig3_one(),
        "fig3relax" => fig3_relaxed(),
        "n20" => n20(),
        "n20study" => n20_study(),
        "n20sweep" => n20_sweep(),
        "sweep" => sweep(),
        other => panic!("unknown mode {other}"),
    }
}

fn fig3_one() {
    use chanmgr_core::training::OptimizerSpec;
    let seed: u64 = std::env::args().nth(2).unwrap_or_else(|| "0".into()).parse().unwrap();
    let space = ActionSpace::subsets(4).unwrap();
    let (topo, gs) = fig3_graph(seed * 1000);
    println!("graph {gs}, {} edges", topo.edge_count());
    for restart in 2..6u64 {
        let mut cfg = TrainConfig::<f64>::new(space.clone());
        cfg.seed = seed + 1 + 1000 * restart;
        cfg.iterations = 2000;
        cfg.batch = 512;
        cfg.optimizer = OptimizerSpec::adam(5e-3);
        cfg.eval_every = Some(50);
        cfg.eval_samples = 200;
        cfg.target_cost = Some(0.05);
        let t0 = Instant::now();
        let (params, hist) = train(&topo, &cfg).unwrap();
        let report = evaluate(&params, &topo, &cfg, 200, EvalMode::Greedy).unwrap();
        println!(
            "restart={restart} cfg.seed={} iters={} greedy={:.4} t={:.1}s",
            cfg.seed,
            hist.records.len(),
            report.mean,
            t0.elapsed().as_secs_f64()
        );
        if report.mean <= 0.05 {
            break;
        }
    }
}

fn n20_sweep() {
    use chanmgr_core::training::OptimizerSpec;
    let space = ActionSpace::subsets(4).unwrap();
    let topo = Topology::gen_er_graph(20, 0.5, 1000).unwrap();
    let grid: &[(usize, f64, usize)] = &[
        (512, 5e-3, 3000),
        (512, 2e-3, 3000),
        (1024, 5e-3, 2000),
        (256, 1e-2, 2000),
        (256, 1e-3, 3000),
    ];
    for &(batch, lr, budget) in grid {
        let mut cfg = TrainConfig::<f64>::new(space.clone());
        cfg.seed = 1;
        cfg.batch = batch;
        cfg.optimizer = OptimizerSpec::adam(lr);
        let t0 = Instant::now();
        let mut trace = String::new();
        for checkpoint in [budget / 4, budget / 2, budget] {
            cfg.iterations = checkpoint;
            let (params, hist) = train(&topo, &cfg).unwrap();
            let g = evaluate(&params, &topo, &cfg, 200, EvalMode::Greedy).unwrap();
            let s = evaluate(&params, &topo, &cfg, 200, EvalMode::Sample).unwrap();
            trace += &format!(
                " [{checkpoint}: g={:.4} s={:.4} train={:.4}]",
                g.mean,
                s.mean,
                hist.final_mean_cost().unwrap()
            );
        }
        println!("batch={batch} lr={lr} budget={budget}:{trace} t={:.0}s", t0.elapsed().as_secs_f64());
    }
}

fn n20_study() {
    use chanmgr_core::interference::Objective;
    use chanmgr_core::training::OptimizerSpec;
    let space = ActionSpace::subsets(4).unwrap();
    // q=0.5 graphs for the mean objective, a complete graph, and max objective
    let cases: &[(&str, f64, u64, Objective)] = &[
        ("mean-q0.5", 0.5, 0, Objective::Mean),
        ("mean-q0.5", 0.5, 1, Objective::Mean),
        ("mean-q0.5", 0.5, 2, Objective::Mean),
        ("k20", 1.0, 0, Objective::Mean),
        ("k20", 1.0, 1, Objective::Mean),
        ("max-q0.5", 0.5, 0, Objective::Max),
        ("max-q0.5", 0.5, 1, Objective::Max),
    ];
    for &(label, q, seed, objective) in cases {
        let topo = Topology::gen_er_graph(20, q, 1000 + seed).unwrap();
        let mut cfg = TrainConfig::<f64>::new(space.clone());
        cfg.seed = seed + 1;
        cfg.batch = 256;
        cfg.optimizer = OptimizerSpec::adam(5e-3);
        cfg.objective = objective;
        let rand = evaluate_random(&topo, &cfg, 200).unwrap();
        let mut trace = String::new();
        let mut last_gnn = f64::NAN;
        let t0 = Instant::now();
        for budget in [500usize, 1000, 2000] {
            cfg.iterations = budget;
            let (params, _) = train(&topo, &cfg).unwrap();
            let g = evaluate(&params, &topo, &cfg, 200, EvalMode::Greedy).unwrap();
            let s = evaluate(&params, &topo, &cfg, 200, EvalMode::Sample).unwrap();
            trace += &format!(" [{budget}: g={:.4} s={:.4}]", g.mean, s.mean);
            last_gnn = g.mean;
        }
        let tg = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        cfg.iterations = 2000;
        let (dp, dh) = dnn_train(&topo, &cfg).unwrap();
        let dnn_policy =
            chanmgr_core::baselines::DnnPolicy::new(dp, topo.n(), space.actions()).unwrap();
        let d = chanmgr_core::training::evaluate_model(
            &dnn_policy,
            &topo,
            &cfg,
            &chanmgr_core::interference::StandardInterference,
            200,
            EvalMode::Greedy,
            cfg.seed,
        )
        .unwrap();
        println!(
            "{label} seed={seed} random={:.4} gnn2000={last_gnn:.4} dnn2000={:.4} (train-last {:.4}) trace:{trace} tg={tg:.0}s td={:.0}s",
            rand.mean,
            d.mean,
            dh.final_mean_cost().unwrap(),
            t1.elapsed().as_secs_f64()
        );
    }
}

fn sweep() {
    use chanmgr_core::training::OptimizerSpec;
    let space = ActionSpace::subsets(4).unwrap();
    // the two graphs where the 256/5e-3 recipe collapsed
    for gseed in [2000u64, 6000] {
        let (topo, gs) = fig3_graph(gseed);
        println!("graph seed {gs}, {} edges", topo.edge_count());
        let grid: &[(f64, usize)] = &[(5e-3, 512), (2e-3, 256)];
        for &(lr, batch) in grid {
            let mut cfg = TrainConfig::<f64>::new(space.clone());
            cfg.seed = gseed / 1000 + 1;
            cfg.iterations = 2500;
            cfg.batch = batch;
            cfg.optimizer = OptimizerSpec::adam(lr);
            cfg.eval_every = Some(50);
            cfg.eval_samples = 200;
            cfg.target_cost = Some(0.04);
            let t0 = Instant::now();
            let (params, hist) = train(&topo, &cfg).unwrap();
            let report = evaluate(&params, &topo, &cfg, 200, EvalMode::Greedy).unwrap();
            print!(
                "lr={lr} batch={batch} iters={} greedy={:.4} t={:.0}s |",
                hist.records.len(),
                report.mean,
                t0.elapsed().as_secs_f64()
            );
            for r in hist.records.iter().step_by(400) {
                print!(" [{} c={:.3} g={:.2}]", r.iteration, r.mean_cost, r.grad_norm);
            }
            println!();
        }
    }
}

fn fig3() {
    use chanmgr_core::training::OptimizerSpec;
    let space = ActionSpace::subsets(4).unwrap();
    for seed in 0..10u64 {
        let (topo, gs) = fig3_graph(seed * 1000);
        let t0 = Instant::now();
        let mut best: Option<(f64, usize, u64)> = None;
        for restart in 0..2u64 {
            let mut cfg = TrainConfig::<f64>::new(space.clone());
            cfg.seed = seed + 1 + 1000 * restart;
            cfg.iterations = 2000;
            cfg.batch = 512;
            cfg.optimizer = OptimizerSpec::adam(5e-3);
            cfg.eval_every = Some(50);
            cfg.eval_samples = 200;
            cfg.target_cost = Some(0.05);
            let (params, hist) = train(&topo, &cfg).unwrap();
            let report = evaluate(&params, &topo, &cfg, 200, EvalMode::Greedy).unwrap();
            if best.is_none() || report.mean < best.unwrap().0 {
                best = Some((report.mean, hist.records.len(), restart));
            }
            if report.mean <= 0.05 {
                break;
            }
        }
        let (greedy, iters, restart) = best.unwrap();
        let mut cfg = TrainConfig::<f64>::new(space.clone());
        cfg.seed = seed + 1;
        let rand = evaluate_random(&topo, &cfg, 200).unwrap();
        println!(
            "fig3 seed={seed} graph={gs} edges={} restart={restart} iters={iters} greedy={greedy:.4} random={:.4} t={:.1}s",
            topo.edge_count(),
            rand.mean,
            t0.elapsed().as_secs_f64()
        );
    }
}

fn fig3_relaxed() {
    let space = ActionSpace::subsets(4).unwrap();
    for seed in 0..2u64 {
        let (topo, gs) = fig3_graph(seed * 1000);
        let mut cfg = TrainConfig::<f64>::new(space.clone());
        cfg.seed = seed + 1;
        cfg.iterations = 500;
        cfg.batch = 64;
        let t0 = Instant::now();
        let (params, hist) = relaxed_gnn_train(&topo, &cfg).unwrap();
        let report = evaluate_relaxed(&params, &topo, &cfg, 200).unwrap();
        let rand = evaluate_random(&topo, &cfg, 200).unwrap();
        println!(
            "relax seed={seed} graph={gs} final-train={:.4} eval={:.4} random={:.4} t={:.1}s",
            hist.final_mean_cost().unwrap(),
            report.mean,
            rand.mean,
            t0.elapsed().as_secs_f64()
        );
    }
}

fn n20() {
    let space = ActionSpace::subsets(4).unwrap();
    for seed in 0..2u64 {
        let topo = Topology::gen_er_graph(20, 0.5, 100 + seed).unwrap();
        let mut cfg = TrainConfig::<f64>::new(space.clone());
        cfg.seed = seed + 1;
        cfg.iterations = 300;
        cfg.batch = 256;
        cfg.optimizer = chanmgr_core::training::OptimizerSpec::adam(5e-3);
        let t0 = Instant::now();
        let (params, hist) = train(&topo, &cfg).unwrap();
        let g = evaluate(&params, &topo, &cfg, 200, EvalMode::Greedy).unwrap();
        let tg = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (dp, dh) = dnn_train(&topo, &cfg).unwrap();
        let td = t1.elapsed().as_secs_f64();
        let rand = evaluate_random(&topo, &cfg, 200).unwrap();
        println!(
            "n20 seed={seed} gnn={:.4} (last train {:.4}, {tg:.1}s) dnn-last={:.4} ({td:.1}s) random={:.4}",
            g.mean,
            hist.final_mean_cost().unwrap(),
            dh.final_mean_cost().unwrap(),
            rand.mean
        );
        let _ = dp;
    }
}
