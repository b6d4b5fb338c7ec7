//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails. Optional arguments select criteria by name substring.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use maptree_core::dataset::{BinaryDataset, SampleSubset, SubsetHash};
use maptree_core::oracle::{brute_force_map, enumerate_trees, OracleGuard};
use maptree_core::posterior::{log_joint, log_leaf_likelihood, LabelCounts, PosteriorParams};
use maptree_core::search::{maptree_search, Search, SearchBudget};
use maptree_core::synthetic::{random_tree, sample_dataset, SynthConfig};
use maptree_core::tree::{fit_greedy, solution_to_tree, tree_to_solution, DecisionTree, TreeNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOLERANCE: f64 = 1e-9;
const PRIOR_MASS_TOLERANCE: f64 = 1e-9;
const BUDGET_LADDER: [u64; 9] = [10, 30, 100, 300, 1000, 3000, 10_000, 30_000, 100_000];
const SYNTH_BUDGET: Duration = Duration::from_secs(10);
const SYNTH_INTERNAL_NODES: usize = 7;
const SYNTH_TEST_SAMPLES: usize = 1000;
const PERF_LIMIT: Duration = Duration::from_secs(120);

type Verdict = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_dataset(rng: &mut impl Rng, n: usize, f: usize) -> BinaryDataset {
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..f).map(|_| rng.random::<bool>() as u8).collect())
        .collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
    BinaryDataset::from_rows(&rows, &labels).unwrap()
}

fn random_params(rng: &mut impl Rng) -> PosteriorParams {
    let alpha = [0.95, 0.5, 0.2, 0.99][rng.random_range(0..4)];
    let beta = [0.5, 1.0, 2.0, 0.1][rng.random_range(0..4)];
    let (rho1, rho0) = [(1.0, 1.0), (0.5, 0.5), (2.0, 5.0), (0.1, 3.0)][rng.random_range(0..4)];
    PosteriorParams::new(alpha, beta, rho1, rho0).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = r.random_range(1..=8);
        let f = r.random_range(1..=4);
        let ds = random_dataset(&mut r, n, f);
        let p = if case % 2 == 0 {
            PosteriorParams::default()
        } else {
            random_params(&mut r)
        };
        let res = maptree_search(&ds, &p, SearchBudget::unlimited()).map_err(|e| e.to_string())?;
        let (_, oracle) =
            brute_force_map(&ds, &p, OracleGuard::default()).map_err(|e| e.to_string())?;
        let diff = (res.neg_log_joint - oracle).abs();
        worst = worst.max(diff);
        if !res.optimal || diff > ORACLE_TOLERANCE {
            return Err(format!(
                "case {case} (N={n}, F={f}): search {} (optimal={}) vs oracle {oracle}",
                res.neg_log_joint, res.optimal
            ));
        }
        let recomputed = -log_joint(&res.tree, &ds, &p).map_err(|e| e.to_string())?;
        if recomputed != res.neg_log_joint {
            return Err(format!(
                "case {case}: reported {} but tree scores {recomputed}",
                res.neg_log_joint
            ));
        }
    }
    Ok(format!("200 datasets, max |search - oracle| = {worst:e}"))
}

fn prior_normalization() -> Verdict {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let n = r.random_range(1..=6);
        let f = r.random_range(1..=3);
        let ds = random_dataset(&mut r, n, f);
        let p = random_params(&mut r);
        let mut mass = 0.0;
        enumerate_trees(&ds, &p, OracleGuard::default(), |t| {
            mass += t.log_prior.exp()
        })
        .map_err(|e| e.to_string())?;
        worst = worst.max((mass - 1.0).abs());
        if (mass - 1.0).abs() > PRIOR_MASS_TOLERANCE {
            return Err(format!("case {case}: total prior mass {mass}"));
        }
    }
    Ok(format!("20 datasets, max |mass - 1| = {worst:e}"))
}

fn leaf_bounds() -> Verdict {
    let settings = [(1.0, 1.0), (0.5, 0.5), (2.0, 5.0), (5.0, 2.0), (0.1, 3.0)];
    let mut checks = 0u64;
    for (rho1, rho0) in settings {
        let p = PosteriorParams::new(0.95, 0.5, rho1, rho0).unwrap();
        let ll = |c1, c0| log_leaf_likelihood(LabelCounts::new(c1, c0), &p);
        for a in 0..=100u32 {
            for b in 0..=100u32 {
                if ll(a, 0) + ll(0, b) < ll(a, b) {
                    return Err(format!(
                        "perfect split below leaf at a={a}, b={b}, rho=({rho1}, {rho0})"
                    ));
                }
                if ll(a + b, 0) < ll(a, 0) + ll(b, 0) {
                    return Err(format!(
                        "pure merge below product at a={a}, b={b}, rho=({rho1}, {rho0})"
                    ));
                }
                checks += 2;
            }
        }
    }
    Ok(format!(
        "{checks} inequalities over 5 pseudocount settings, zero violations"
    ))
}

fn heuristic_consistency() -> Verdict {
    let mut r = rng(4);
    let (mut or_checks, mut and_checks, mut violations, mut inadmissible) = (0, 0, 0, 0);
    let runs = 60;
    for _ in 0..runs {
        let n = r.random_range(2..=80);
        let f = r.random_range(1..=8);
        let ds = random_dataset(&mut r, n, f);
        let p = random_params(&mut r);
        let mut s = Search::new(&ds, &p);
        let res = s
            .run(SearchBudget::expansions(3000))
            .map_err(|e| e.to_string())?;
        let a = s.audit();
        or_checks += a.or_checks;
        and_checks += a.and_checks;
        violations += a.violations();
        if res.optimal {
            inadmissible += s.admissibility_violations();
        }
    }
    if violations > 0 || inadmissible > 0 {
        return Err(format!(
            "{violations} consistency and {inadmissible} admissibility violations"
        ));
    }
    Ok(format!(
        "{runs} searches, {or_checks} OR and {and_checks} AND checks, zero violations"
    ))
}

fn anytime_monotonicity() -> Verdict {
    let mut solved = 0;
    for seed in 0..20 {
        let cfg = SynthConfig {
            n_features: 10,
            n_internal_nodes: 5,
            n_samples: 200,
            noise_eps: 0.1,
            seed: 500 + seed,
        };
        let ds = maptree_core::synthetic::generate(&cfg)
            .map_err(|e| e.to_string())?
            .1;
        let p = PosteriorParams::default();
        let mut previous = f64::INFINITY;
        for budget in BUDGET_LADDER {
            let res = maptree_search(&ds, &p, SearchBudget::expansions(budget))
                .map_err(|e| e.to_string())?;
            if res.neg_log_joint > previous {
                return Err(format!(
                    "seed {seed}: budget {budget} gives {} after {previous}",
                    res.neg_log_joint
                ));
            }
            previous = res.neg_log_joint;
            if res.optimal {
                solved += 1;
                break;
            }
        }
    }
    Ok(format!(
        "20 datasets non-increasing along the ladder ({solved} reached optimality)"
    ))
}

/// A random tree whose splits are all nontrivial on `ds`, choosing among the
/// leaf and the valid splits uniformly at each step.
fn random_descent(ds: &BinaryDataset, r: &mut impl Rng) -> DecisionTree {
    fn go(ds: &BinaryDataset, s: &mut SampleSubset, r: &mut impl Rng) -> TreeNode {
        let valid = s.valid_splits(ds);
        let pick = r.random_range(0..=valid.len());
        if pick == valid.len() {
            return TreeNode::Leaf(s.label_counts(ds));
        }
        let f = valid[pick];
        let cp = s.restrict(ds, f, false);
        let left = go(ds, s, r);
        s.undo(cp).unwrap();
        let cp = s.restrict(ds, f, true);
        let right = go(ds, s, r);
        s.undo(cp).unwrap();
        TreeNode::split(f, left, right)
    }
    let mut s = SampleSubset::full(ds);
    DecisionTree::new(ds.n_features(), go(ds, &mut s, r))
}

fn bijection() -> Verdict {
    let mut r = rng(6);
    let mut nodes = 0;
    for case in 0..200 {
        let (n, f) = (r.random_range(1..=64), r.random_range(1..=8));
        let ds = random_dataset(&mut r, n, f);
        let p = random_params(&mut r);
        let tree = random_descent(&ds, &mut r);
        let sol = tree_to_solution(&tree, &ds, &p).map_err(|e| e.to_string())?;
        let back = solution_to_tree(&sol);
        if back != tree || tree_to_solution(&back, &ds, &p).map_err(|e| e.to_string())? != sol {
            return Err(format!("case {case}: round trip changed the solution"));
        }
        let lj = log_joint(&tree, &ds, &p).map_err(|e| e.to_string())?;
        if sol.cost().value() != -lj {
            return Err(format!(
                "case {case}: solution cost {} vs -log_joint {}",
                sol.cost(),
                -lj
            ));
        }
        nodes += sol.nodes().len();
    }
    Ok(format!(
        "200 solution graphs ({nodes} OR nodes), costs equal bit for bit"
    ))
}

fn bitset_and_hash() -> Verdict {
    let mut r = rng(7);
    let n = 512;
    let ds = random_dataset(&mut r, n, 24);
    let mut ops = 0u64;
    for seq in 0..10_000 {
        let mut s = SampleSubset::full(&ds);
        let original = s.clone();
        let mut model: Vec<Vec<bool>> = vec![vec![true; n]];
        let mut stack = Vec::new();
        for _ in 0..r.random_range(1..=40) {
            let push = stack.is_empty() || (stack.len() < 12 && r.random_bool(0.6));
            if push {
                let f = r.random_range(0..ds.n_features());
                let v = r.random::<bool>();
                stack.push(s.restrict(&ds, f, v));
                let top = model.last().unwrap();
                model.push((0..n).map(|i| top[i] && ds.feature(i, f) == v).collect());
            } else {
                s.undo(stack.pop().unwrap()).map_err(|e| e.to_string())?;
                model.pop();
            }
            ops += 1;
            let expected: Vec<usize> = (0..n).filter(|&i| model.last().unwrap()[i]).collect();
            if s.indices().collect::<Vec<_>>() != expected {
                return Err(format!("sequence {seq}: subset differs from the model"));
            }
            if s.hash() != SubsetHash::of_blocks(s.words()) {
                return Err(format!(
                    "sequence {seq}: sparse hash differs from the dense hash"
                ));
            }
        }
        while let Some(cp) = stack.pop() {
            s.undo(cp).map_err(|e| e.to_string())?;
        }
        if s.words() != original.words() || s.active_words() != original.active_words() {
            return Err(format!("sequence {seq}: full undo is not bit-exact"));
        }
    }

    // Random subsets of three kinds: uniform, very sparse, and with zeroed or
    // thinned blocks. The full cache key must separate all of them; collisions
    // of the two polynomial lanes alone are reported for reference.
    let n = 256;
    let mut seen_sets: HashSet<[u64; 4]> = HashSet::with_capacity(1_000_000);
    let mut seen_keys: HashSet<SubsetHash> = HashSet::with_capacity(1_000_000);
    let mut seen_lanes: HashSet<(u64, u64)> = HashSet::with_capacity(1_000_000);
    let mut lane_collisions = 0;
    while seen_sets.len() < 1_000_000 {
        let blocks: [u64; 4] = match seen_sets.len() % 3 {
            0 => r.random(),
            1 => {
                let mut b = [0u64; 4];
                for _ in 0..r.random_range(1..=4) {
                    let i = r.random_range(0..n);
                    b[i / 64] |= 1 << (i % 64);
                }
                b
            }
            _ => {
                let mut b: [u64; 4] = r.random();
                b[r.random_range(0..4)] = 0;
                b[r.random_range(0..4)] &= r.random::<u64>();
                b
            }
        };
        if blocks == [0; 4] || !seen_sets.insert(blocks) {
            continue;
        }
        let indices = (0..n).filter(|&i| blocks[i / 64] >> (i % 64) & 1 == 1);
        let h = SampleSubset::from_indices(n, indices).hash();
        if !seen_keys.insert(h) {
            return Err(format!("cache key collision at {blocks:x?}"));
        }
        if !seen_lanes.insert(h.lanes()) {
            lane_collisions += 1;
        }
    }
    Ok(format!(
        "10000 sequences ({ops} operations) at N=512 bit-exact; 1000000 distinct subsets at N=256, \
         no cache key collisions ({lane_collisions} among the polynomial lanes alone)"
    ))
}

fn synthetic_generalization() -> Verdict {
    let p = PosteriorParams::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for n in [50usize, 200, 800] {
        let (mut acc_map, mut acc_greedy, mut optimal) = (0.0, 0.0, 0);
        for t in 0..20u64 {
            let cfg = SynthConfig {
                n_features: 40,
                n_internal_nodes: SYNTH_INTERNAL_NODES,
                n_samples: n,
                noise_eps: 0.25,
                seed: 1000 + t,
            };
            let mut tree_rng = cfg.rng();
            let truth = random_tree(&cfg, &mut tree_rng).map_err(|e| e.to_string())?;
            let train = sample_dataset(&truth, &cfg, &mut tree_rng).map_err(|e| e.to_string())?;
            let test_cfg = SynthConfig {
                n_samples: SYNTH_TEST_SAMPLES,
                noise_eps: 0.0,
                ..cfg
            };
            let test =
                sample_dataset(&truth, &test_cfg, &mut tree_rng).map_err(|e| e.to_string())?;
            let res = maptree_search(&train, &p, SearchBudget::time(SYNTH_BUDGET))
                .map_err(|e| e.to_string())?;
            optimal += res.optimal as usize;
            acc_map += res.tree.evaluate(&test, &p).accuracy / 20.0;
            acc_greedy += fit_greedy(&train, 4).evaluate(&test, &p).accuracy / 20.0;
        }
        ok &= acc_map >= acc_greedy;
        lines.push(format!(
            "N={n}: {acc_map:.4} vs greedy {acc_greedy:.4} ({optimal}/20 optimal)"
        ));
    }
    let summary = lines.join("; ");
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn performance() -> Verdict {
    let cfg = SynthConfig {
        n_features: 20,
        n_internal_nodes: 10,
        n_samples: 1000,
        noise_eps: 0.1,
        seed: 77,
    };
    let (_, ds) = maptree_core::synthetic::generate(&cfg).map_err(|e| e.to_string())?;
    let p = PosteriorParams::default();
    let start = Instant::now();
    let res =
        maptree_search(&ds, &p, SearchBudget::expansions(100_000)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let recomputed = -log_joint(&res.tree, &ds, &p).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} expansions in {:.1} s, cost {:.4}, {} tree nodes, {} OR nodes",
        res.expansions_used,
        elapsed.as_secs_f64(),
        res.neg_log_joint,
        res.tree.n_nodes(),
        res.or_nodes
    );
    if elapsed < PERF_LIMIT && res.neg_log_joint.is_finite() && recomputed == res.neg_log_joint {
        Ok(detail)
    } else {
        Err(detail)
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle_equivalence", oracle_equivalence),
        ("prior_normalization", prior_normalization),
        ("leaf_bounds", leaf_bounds),
        ("heuristic_consistency", heuristic_consistency),
        ("anytime_monotonicity", anytime_monotonicity),
        ("bijection", bijection),
        ("bitset_and_hash", bitset_and_hash),
        ("synthetic_generalization", synthetic_generalization),
        ("performance", performance),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = false;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed = true;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
