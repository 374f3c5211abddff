//! Acceptance criteria. Each test prints one `PASS`/`FAIL`/`SKIP` line and
//! then asserts. Run with `cargo test -p crimenet --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use crimenet::config::{DataConfig, PipelineConfig};
use crimenet::evaluate::{rmse_per_type, PredictionEntry, PredictionSet, RmseConvention};
use crimenet::ingest::SynthPlan;
use crimenet::linalg::{pseudo_inverse, DEFAULT_RANK_TOL};
use crimenet::models::{fit_polyreg, fit_svr, kernel_matrix, predict_polyreg, predict_svr, ModelKind, SvrParams};
use crimenet::pipeline::{self, load_cube, run_experiment};
use crimenet::similarity::commute_times;
use crimenet::{CommunityId, Variant, YearMonth};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} [{id}] {name}: {detail}");
}

/// Dense Gaussian elimination with partial pivoting.
fn solve(mut a: DMatrix<f64>, mut b: DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        a.swap_rows(col, piv);
        b.swap_rows(col, piv);
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            if f != 0.0 {
                for c in col..n {
                    a[(r, c)] -= f * a[(col, c)];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = DVector::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[(r, c)] * x[c]).sum();
        x[r] = (b[r] - s) / a[(r, r)];
    }
    x
}

fn laplacian_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(u, v, w) in edges {
        l[(u, v)] -= w;
        l[(v, u)] -= w;
        l[(u, u)] += w;
        l[(v, v)] += w;
    }
    l
}

#[test]
fn criterion_1_penrose_conditions() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(5..=100);
        let p = rng.random_range(0.05..0.6);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v, rng.random_range(0.1..5.0)));
                }
            }
        }
        let l = laplacian_from_edges(n, &edges);
        let x = pseudo_inverse(&l, DEFAULT_RANK_TOL).unwrap();
        let scale = l.norm().max(f64::MIN_POSITIVE);
        let lx = &l * &x;
        let xl = &x * &l;
        let residuals = [
            (&lx * &l - &l).norm(),
            (&xl * &x - &x).norm(),
            (&lx - lx.transpose()).norm(),
            (&xl - xl.transpose()).norm(),
        ];
        for r in residuals {
            worst = worst.max(r / scale);
        }
    }
    let two = pseudo_inverse(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]), DEFAULT_RANK_TOL).unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
    let two_err = (&two - &expect).abs().max();
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && two_err <= 1e-12 && secs < 30.0;
    verdict(
        1,
        "penrose",
        pass,
        &format!("50 Laplacians, worst residual {worst:.2e}·‖L‖_F (limit 1e-8); 2-node error {two_err:.1e} (limit 1e-12); {secs:.2}s (limit 30s)"),
    );
    assert!(pass);
}

/// Effective resistance between `i` and `j` by grounding `j` and solving the
/// reduced Laplacian system.
fn effective_resistance(l: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let n = l.nrows();
    let keep: Vec<usize> = (0..n).filter(|&k| k != j).collect();
    let reduced = DMatrix::from_fn(n - 1, n - 1, |r, c| l[(keep[r], keep[c])]);
    let pos = keep.iter().position(|&k| k == i).unwrap();
    let mut e = DVector::zeros(n - 1);
    e[pos] = 1.0;
    solve(reduced, e)[pos]
}

#[test]
fn criterion_2_commute_time_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(3..=12);
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        // random spanning tree keeps the graph connected
        for v in 1..n {
            edges.push((rng.random_range(0..v), v, 1.0));
        }
        for u in 0..n {
            for v in u + 1..n {
                if !edges.iter().any(|&(a, b, _)| (a, b) == (u, v)) && rng.random_bool(0.3) {
                    edges.push((u, v, 1.0));
                }
            }
        }
        let l = laplacian_from_edges(n, &edges);
        let ct = commute_times(&l, DEFAULT_RANK_TOL).unwrap();
        let vol = 2.0 * edges.len() as f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let oracle = vol * effective_resistance(&l, i, j);
                    worst = worst.max((ct[(i, j)] - oracle).abs());
                }
            }
        }
    }
    let path = laplacian_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
    let ends = commute_times(&path, DEFAULT_RANK_TOL).unwrap()[(0, 2)];
    let path_err = (ends - 8.0).abs();
    let pass = worst <= 1e-8 && path_err <= 1e-12;
    verdict(
        2,
        "commute-time",
        pass,
        &format!("20 graphs, worst |Δ| {worst:.2e} (limit 1e-8); 3-path endpoints {ends:.15} (expect 8)"),
    );
    assert!(pass);
}

struct QpSolution {
    beta: Vec<f64>,
    bias: f64,
    objective: f64,
}

/// Projection onto `{0 ≤ z ≤ c, Σ z_a − Σ z_b = 0}` for `z = (a, b)`, by
/// bisection on the multiplier of the equality.
fn project(v: &[f64], n: usize, c: f64, out: &mut [f64]) {
    let h = |lam: f64| -> f64 {
        let a: f64 = v[..n].iter().map(|x| (x - lam).clamp(0.0, c)).sum();
        let b: f64 = v[n..].iter().map(|x| (x + lam).clamp(0.0, c)).sum();
        a - b
    };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    for k in 0..2 * n {
        let shifted = if k < n { v[k] - lam } else { v[k] + lam };
        out[k] = shifted.clamp(0.0, c);
    }
}

/// Dual of ε-SVR in the `(α, α*)` form, minimized by FISTA with adaptive
/// restart and exact-feasibility projection.
fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, eps: f64) -> QpSolution {
    let n = y.len();
    let lip = 2.0 * (0..n).map(|i| k.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lip;
    let beta_of = |z: &[f64]| -> Vec<f64> { (0..n).map(|i| z[i] - z[n + i]).collect() };
    let kb = |b: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| k[(i, j)] * b[j]).sum()).collect() };
    let value = |z: &[f64]| -> f64 {
        let b = beta_of(z);
        let q = kb(&b);
        0.5 * (0..n).map(|i| b[i] * q[i]).sum::<f64>() + eps * z.iter().sum::<f64>()
            - (0..n).map(|i| y[i] * b[i]).sum::<f64>()
    };
    let grad = |z: &[f64], g: &mut [f64]| {
        let q = kb(&beta_of(z));
        for k in 0..n {
            g[k] = q[k] + eps - y[k];
            g[n + k] = -q[k] + eps + y[k];
        }
    };
    let mut x = vec![0.0; 2 * n];
    let mut w = x.clone();
    let mut nx = x.clone();
    let mut g = x.clone();
    let mut v = x.clone();
    let mut t = 1.0f64;
    let mut fx = value(&x);
    for it in 0..400_000 {
        grad(&w, &mut g);
        for k in 0..2 * n {
            v[k] = w[k] - step * g[k];
        }
        project(&v, n, c, &mut nx);
        let fnx = value(&nx);
        if fnx > fx {
            // restart momentum
            t = 1.0;
            w.copy_from_slice(&x);
            continue;
        }
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        for k in 0..2 * n {
            w[k] = nx[k] + (t - 1.0) / nt * (nx[k] - x[k]);
        }
        std::mem::swap(&mut x, &mut nx);
        fx = fnx;
        t = nt;
        if it % 64 != 0 {
            continue;
        }
        // projected-gradient fixed-point residual at x
        grad(&x, &mut g);
        for k in 0..2 * n {
            v[k] = x[k] - step * g[k];
        }
        project(&v, n, c, &mut nx);
        let residual = nx.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if residual < 1e-14 * c {
            break;
        }
    }
    let beta = beta_of(&x);
    let q = kb(&beta);
    // bias from the KKT conditions
    let tol = 1e-9 * c;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut free = Vec::new();
    for i in 0..n {
        let r = y[i] - q[i];
        let (a, s) = (x[i], x[n + i]);
        if a > tol && a < c - tol {
            free.push(r - eps);
        } else if s > tol && s < c - tol {
            free.push(r + eps);
        } else if a >= c - tol {
            hi = hi.min(r - eps);
        } else if s >= c - tol {
            lo = lo.max(r + eps);
        } else {
            lo = lo.max(r - eps);
            hi = hi.min(r + eps);
        }
    }
    let bias = if free.is_empty() {
        0.5 * (lo + hi)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    QpSolution {
        objective: -fx,
        beta,
        bias,
    }
}

#[test]
fn criterion_3_svr_matches_qp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst_pred, mut worst_obj): (f64, f64) = (0.0, 0.0);
    let mut all_converged = true;
    for _ in 0..30 {
        let n = rng.random_range(4..=20);
        let d = rng.random_range(1..=5);
        let x: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = x.row(i).iter().map(|v| (6.0 * v).sin()).sum();
                s + rng.random_range(-0.3..0.3)
            })
            .collect();
        let c = [0.5, 1.0, 5.0][rng.random_range(0..3)];
        let eps = [0.01, 0.1, 0.3][rng.random_range(0..3)];
        let gamma = if rng.random_bool(0.5) { None } else { Some(rng.random_range(0.2..3.0)) };
        let params = SvrParams {
            c,
            epsilon: eps,
            gamma,
            tol: 1e-10,
            max_iter: 10_000_000,
        };
        let model = fit_svr(&x, &y, &params).unwrap();
        all_converged &= model.converged;
        let k = kernel_matrix(&x, &x, params.resolved_gamma(d));
        let oracle = qp_oracle(&k, &y, c, eps);
        for i in 0..n {
            let f_oracle: f64 = oracle.bias + (0..n).map(|j| oracle.beta[j] * k[(i, j)]).sum::<f64>();
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let f = predict_svr(&model, &row).unwrap();
            worst_pred = worst_pred.max((f - f_oracle).abs());
        }
        worst_obj = worst_obj.max((model.objective - oracle.objective).abs());
    }
    let pass = worst_pred <= 1e-4 && worst_obj <= 1e-6 && all_converged;
    verdict(
        3,
        "svr-vs-qp",
        pass,
        &format!(
            "30 instances (SMO tol 1e-10), worst prediction |Δ| {worst_pred:.2e} (limit 1e-4), worst objective |Δ| {worst_obj:.2e} (limit 1e-6)"
        ),
    );
    assert!(pass);
}

/// Least squares through the normal equations after dropping repeated
/// columns of the design matrix; returns predictions for `rows`.
fn dedup_oracle(design: &DMatrix<f64>, y: &DVector<f64>, rows: &DMatrix<f64>) -> Vec<f64> {
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..design.ncols() {
        if !keep.iter().any(|&k| design.column(k) == design.column(j)) {
            keep.push(j);
        }
    }
    let a = DMatrix::from_fn(design.nrows(), keep.len(), |i, j| design[(i, keep[j])]);
    let coef = solve(a.transpose() * &a, a.transpose() * y);
    (0..rows.nrows())
        .map(|i| keep.iter().enumerate().map(|(j, &k)| coef[j] * rows[(i, k)]).sum())
        .collect()
}

fn quad_design(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), 2 * x.ncols() + 1, |i, k| match k {
        0 => 1.0,
        k if k % 2 == 1 => x[(i, (k - 1) / 2)],
        k => x[(i, (k - 1) / 2)] * x[(i, (k - 1) / 2)],
    })
}

#[test]
fn criterion_4_polynomial_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_coef: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=10);
        let n = 4 * (2 * d + 1);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let a: Vec<f64> = (0..2 * d + 1).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = quad_design(&x) * DVector::from_column_slice(&a);
        let m = fit_polyreg(&x, &y).unwrap();
        for (c, e) in m.coefficients.iter().zip(&a) {
            worst_coef = worst_coef.max((c - e).abs());
        }
    }

    let mut worst_pred: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..=8);
        let n = 6 * (2 * d + 1);
        let dup = rng.random_range(1..d);
        let src = rng.random_range(0..dup);
        let constant = (d > 2).then(|| rng.random_range(0..d)).filter(|&m| m != dup && m != src);
        let sample = |rows: usize, rng: &mut ChaCha8Rng| {
            let mut x: DMatrix<f64> = DMatrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0));
            for i in 0..rows {
                x[(i, dup)] = x[(i, src)];
                if let Some(m) = constant {
                    x[(i, m)] = 1.0;
                }
            }
            x
        };
        let x = sample(n, &mut rng);
        let y = DVector::from_fn(n, |i, _| {
            (0..d).map(|j| (j as f64 + 1.0) * x[(i, j)].powi(2) - x[(i, j)]).sum::<f64>() + rng.random_range(-0.5..0.5)
        });
        let probe = sample(25, &mut rng);
        let oracle = dedup_oracle(&quad_design(&x), &y, &quad_design(&probe));
        let m = fit_polyreg(&x, &y).unwrap();
        for (i, o) in oracle.iter().enumerate() {
            let row: Vec<f64> = probe.row(i).iter().copied().collect();
            worst_pred = worst_pred.max((predict_polyreg(&m, &row).unwrap() - o).abs());
        }
    }
    let pass = worst_coef < 1e-8 && worst_pred <= 1e-8;
    verdict(
        4,
        "polynomial",
        pass,
        &format!(
            "20 planted quadratics, worst coefficient error {worst_coef:.2e} (limit 1e-8); 20 rank-deficient fits, worst prediction |Δ| vs de-duplicated oracle {worst_pred:.2e} (limit 1e-8)"
        ),
    );
    assert!(pass);
}

/// Crime totals per type for 2011..=2015; `None` marks a blank cell.
const TABLE_1: [(&str, [Option<u64>; 5]); 32] = [
    ("ARSON", [Some(504), Some(469), Some(364), Some(397), Some(453)]),
    ("ASSAULT", [Some(20411), Some(19898), Some(17971), Some(16900), Some(17041)]),
    ("BATTERY", [Some(60458), Some(59134), Some(54003), Some(49447), Some(48910)]),
    ("BURGLARY", [Some(26619), Some(22844), Some(17894), Some(14570), Some(13183)]),
    ("CONCEALED CARRY LICENSE VIOLATION", [None, None, None, Some(15), Some(34)]),
    ("CRIM SEXUAL ASSAULT", [Some(1471), Some(1409), Some(1272), Some(1325), Some(1365)]),
    ("CRIMINAL DAMAGE", [Some(37332), Some(35854), Some(30853), Some(27798), Some(28672)]),
    ("CRIMINAL TRESPASS", [Some(8659), Some(8215), Some(8135), Some(7539), Some(6401)]),
    ("DECEPTIVE PRACTICE", [Some(12569), Some(13515), Some(13581), Some(15466), Some(15676)]),
    ("GAMBLING", [Some(736), Some(724), Some(596), Some(393), Some(310)]),
    ("HOMICIDE", [Some(437), Some(505), Some(422), Some(426), Some(499)]),
    ("HUMAN TRAFFICKING", [None, None, Some(2), Some(2), Some(13)]),
    ("INTERFERENCE WITH PUBLIC OFFICER", [Some(1048), Some(1228), Some(1281), Some(1398), Some(1308)]),
    ("INTIMIDATION", [Some(171), Some(156), Some(134), Some(116), Some(122)]),
    ("KIDNAPPING", [Some(266), Some(236), Some(242), Some(220), Some(190)]),
    ("LIQUOR LAW VIOLATION", [Some(619), Some(573), Some(465), Some(397), Some(292)]),
    ("MOTOR VEHICLE THEFT", [Some(19387), Some(16492), Some(12582), Some(9912), Some(10070)]),
    ("NARCOTICS", [Some(38605), Some(35488), Some(34127), Some(28995), Some(23837)]),
    ("NON-CRIMINAL", [None, Some(6), Some(7), Some(27), Some(35)]),
    ("NON-CRIMINAL (SUBJECT SPECIFIED)", [None, Some(2), None, Some(1), None]),
    ("OBSCENITY", [Some(40), Some(26), Some(24), Some(38), Some(46)]),
    ("OFFENSE INVOLVING CHILDREN", [Some(2329), Some(2197), Some(2331), Some(2358), Some(2265)]),
    ("OTHER NARCOTIC VIOLATION", [Some(5), Some(6), Some(5), Some(10), Some(5)]),
    ("OTHER OFFENSE", [Some(20189), Some(17479), Some(17988), Some(16972), Some(17541)]),
    ("PROSTITUTION", [Some(2424), Some(2204), Some(1652), Some(1626), Some(1322)]),
    ("PUBLIC INDECENCY", [Some(13), Some(17), Some(10), Some(10), Some(14)]),
    ("PUBLIC PEACE VIOLATION", [Some(3095), Some(3007), Some(3135), Some(2903), Some(2422)]),
    ("ROBBERY", [Some(13982), Some(13485), Some(11820), Some(9800), Some(9638)]),
    ("SEX OFFENSE", [Some(1071), Some(1051), Some(1019), Some(958), Some(972)]),
    ("STALKING", [Some(181), Some(207), Some(153), Some(140), Some(154)]),
    ("THEFT", [Some(75146), Some(75458), Some(71524), Some(61548), Some(57319)]),
    ("WEAPONS VIOLATION", [Some(3880), Some(3907), Some(3246), Some(3114), Some(3362)]),
];

/// Six significant digits, as text.
fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

#[test]
fn criterion_5_rmse_fixture() {
    let months: Vec<YearMonth> = (1..=12).map(|m| YearMonth::new(2015, m).unwrap()).collect();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    let mut theft = None;
    for (label, totals) in TABLE_1 {
        let Some(total) = totals[4] else { continue };
        // spread the total over 77 x 12 cells; every prediction is off by one
        let base = total / 924;
        let extra = (total % 924) as usize;
        let mut entries = Vec::with_capacity(924);
        for (mi, &month) in months.iter().enumerate() {
            for c in 0..77 {
                let cell = mi * 77 + c;
                let actual = (base + u64::from(cell < extra)) as f64;
                entries.push(PredictionEntry {
                    month,
                    community: CommunityId::from_index(c),
                    crime_type: 0,
                    actual,
                    predicted: actual + 1.0,
                    model: ModelKind::Svr,
                    variant: Variant::Full,
                });
            }
        }
        let preds = PredictionSet {
            type_labels: vec![label.to_string()],
            entries,
        };
        let got = rmse_per_type(&preds, 0, RmseConvention::Paper).unwrap();
        let expect = (924.0 / total as f64).sqrt();
        checked += 1;
        if sig6(got) != sig6(expect) {
            mismatches.push(format!("{label}: {got} vs {expect}"));
        }
        if label == "THEFT" {
            theft = Some(got);
        }
    }
    let theft = theft.unwrap();
    let pass = mismatches.is_empty() && checked == 31;
    verdict(
        5,
        "rmse-fixture",
        pass,
        &format!(
            "{checked} types with a 2015 total match sqrt(924/total) to 6 significant digits; THEFT (57319) gives {theft:.6} \
             (the criterion's quoted 0.126980 is not sqrt(924/57319) = 0.126966 and is not used as the reference){}",
            if mismatches.is_empty() { String::new() } else { format!("; mismatches: {mismatches:?}") }
        ),
    );
    assert!(pass);
}

fn mean_rmse(out: &pipeline::RunOutcome, variant: Variant, model: ModelKind) -> f64 {
    let report = out.reports.iter().find(|r| r.variant == variant).unwrap();
    let vals: Vec<f64> = report
        .rows
        .iter()
        .filter(|((_, m), _)| *m == model)
        .filter_map(|(_, row)| row.rmse)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn criterion_6_planted_fusion_benefit() {
    let mut wins = 0;
    let mut slowest: f64 = 0.0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let start = Instant::now();
        let mut cfg = PipelineConfig {
            seed,
            data: DataConfig {
                synthetic: true,
                n_communities: 30,
                ..DataConfig::default()
            },
            synthetic: SynthPlan {
                crime_types: 5,
                ..SynthPlan::default()
            },
            ..PipelineConfig::default()
        };
        cfg.models.kinds = vec![ModelKind::Svr];
        let source = load_cube(&cfg).unwrap();
        let out = run_experiment(&source.cube, &cfg).unwrap();
        let full = mean_rmse(&out, Variant::Full, ModelKind::Svr);
        let only = mean_rmse(&out, Variant::OnlyCrime, ModelKind::Svr);
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        if full < only {
            wins += 1;
        }
        lines.push(format!("seed {seed}: full {full:.4} vs only-crime {only:.4} ({secs:.1}s)"));
    }
    for l in &lines {
        println!("    {l}");
    }
    let pass = wins >= 8 && slowest < 300.0;
    verdict(
        6,
        "planted-fusion",
        pass,
        &format!(
            "full-network SVR has lower mean paper RMSE over types on {wins}/10 seeds (need 8); slowest seed {slowest:.1}s (limit 300s)"
        ),
    );
    assert!(pass);
}

/// Needs the downloaded city data: set `CRIMENET_REAL_CONFIG` to a config
/// file pointing at it.
#[test]
fn criterion_7_real_data() {
    let Ok(path) = std::env::var("CRIMENET_REAL_CONFIG") else {
        println!("SKIP [7] real-data: CRIMENET_REAL_CONFIG not set");
        return;
    };
    let cfg = PipelineConfig::load(Path::new(&path)).unwrap();
    let source = load_cube(&cfg).unwrap();
    let cube = &source.cube;
    let mut mismatches = Vec::new();
    for (label, totals) in TABLE_1 {
        let idx = cube.crime_types.index_of(label);
        for (k, expect) in totals.iter().enumerate() {
            let got = idx.map(|t| cube.annual_type_total(2011 + k as i32, t)).unwrap_or(0);
            if got != expect.unwrap_or(0) {
                mismatches.push(format!("{label} {}: {got} vs {}", 2011 + k, expect.unwrap_or(0)));
            }
        }
    }
    let totals_ok = mismatches.is_empty();
    verdict(
        7,
        "real-data totals",
        totals_ok,
        &if totals_ok {
            "every yearly total matches the published table".to_string()
        } else {
            format!("{} mismatches: {mismatches:?}", mismatches.len())
        },
    );

    let out = run_experiment(cube, &cfg).unwrap();
    let report = out.reports.iter().find(|r| r.variant == Variant::Full).unwrap();
    let top = crimenet::evaluate::top_types(&report.totals, crimenet::evaluate::TOP_TYPES);
    let medians: BTreeMap<(usize, ModelKind), f64> =
        report.rows.iter().map(|(k, row)| (*k, row.errors.median)).collect();
    let svr_best = top
        .iter()
        .filter(|&&t| {
            let svr = medians[&(t, ModelKind::Svr)];
            [ModelKind::PolyReg, ModelKind::Ar].iter().all(|m| svr <= medians[&(t, *m)])
        })
        .count();
    println!(
        "INFO [7] real-data ordering: SVR median error lowest on {svr_best}/{} top types (reported, not gated)",
        top.len()
    );
    assert!(totals_ok);
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run_into = |sub: &str| {
        let mut cfg = PipelineConfig {
            seed: 8,
            data: DataConfig {
                synthetic: true,
                n_communities: 12,
                ..DataConfig::default()
            },
            synthetic: SynthPlan {
                crime_types: 4,
                ..SynthPlan::default()
            },
            ..PipelineConfig::default()
        };
        cfg.output.dir = dir.path().join(sub);
        pipeline::run(&cfg).unwrap().1
    };
    let written = run_into("a");
    run_into("b");
    let csvs: Vec<&String> = written.iter().filter(|f| f.ends_with(".csv")).collect();
    let differing: Vec<&&String> = csvs
        .iter()
        .filter(|f| {
            std::fs::read(dir.path().join("a").join(f)).unwrap()
                != std::fs::read(dir.path().join("b").join(f)).unwrap()
        })
        .collect();
    let pass = differing.is_empty() && csvs.len() >= 7;
    verdict(
        8,
        "determinism",
        pass,
        &format!("{} output CSVs compared, {} differ", csvs.len(), differing.len()),
    );
    assert!(pass);
}
