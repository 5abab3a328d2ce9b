//! The experiments behind each subcommand, as plain functions returning
//! tables. Every random quantity is drawn from a substream of the seed, so
//! results depend only on the arguments.

use anyhow::{bail, Context, Result};

use fitpa::analytics::{mori_conditional_mean, s_deviation_profile, s_moment_exact, PmfTable};
use fitpa::couplings::{coupling_run, CouplingReport, ProbeContext};
use fitpa::exploration::explore_neighborhood_sparse;
use fitpa::fitness::{check_concentration_event, default_phi, sample_fitness_sequence};
use fitpa::generators::{
    generate_embellished_urn_tree, generate_sequential, generate_urn_tree, uniform_vertex_degrees,
    PointMassDegreeSampler,
};
use fitpa::pointtree::sample_pi_polya_point_tree;
use fitpa::rng::{self, substream, SimRng};
use fitpa::stats::{canonical_code_to_depth, tv_distance, tv_to_pmf, EmpiricalDistribution};
use fitpa::{Embellishment, FitnessModel, FitnessSequence, PATree};

use crate::table::Table;

/// Stream index for replicate `i` of grid point `g`; grid slot 0 is kept for
/// draws shared across the grid.
fn stream(g: usize, i: u64) -> u64 {
    ((g as u64 + 1) << 40) | i
}

/// Fitness sequence for one replicate. Point masses skip the sampler, whose
/// output would be the same constant sequence.
fn fitness_for(model: &FitnessModel, n: usize, rng: &mut SimRng) -> Result<FitnessSequence> {
    Ok(match model.point_mass_value() {
        Some(v) => FitnessSequence::constant(model, n, v)?,
        None => sample_fitness_sequence(model, n, rng)?,
    })
}

fn uniform_vertex(n: usize, rng: &mut SimRng) -> usize {
    ((n as f64 * rng::unif_open0(rng)).ceil() as usize).clamp(1, n)
}

pub fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        bail!("the n-grid is empty");
    }
    if grid.iter().any(|&n| n < 2) {
        bail!("every n must be at least 2");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        bail!("the n-grid must be strictly increasing");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Sequential,
    Urn,
    Embellished,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Sequential => "sequential",
            Generator::Urn => "urn",
            Generator::Embellished => "embellished",
        }
    }
}

/// One tree: the fitness sequence from substream 0, the tree from substream 1.
pub fn generate(
    model: &FitnessModel,
    generator: Generator,
    n: usize,
    embellishment: Option<&Embellishment>,
    seed: u64,
) -> Result<PATree> {
    if n < 1 {
        bail!("n must be at least 1");
    }
    let seq = fitness_for(model, n, &mut substream(seed, 0))?;
    let mut rng = substream(seed, 1);
    Ok(match generator {
        Generator::Sequential => generate_sequential(&seq, &mut rng),
        Generator::Urn => generate_urn_tree(&seq, &mut rng).0,
        Generator::Embellished => {
            let emb = embellishment.context("the embellished generator needs an embellishment")?;
            generate_embellished_urn_tree(&seq, emb, &mut rng)?
        }
    })
}

pub const LOCAL_LIMIT_COLUMNS: &[&str] = &["n", "r", "reps", "tv_upper_bound", "truncated_fraction", "flagged"];

/// Shape-distribution TV between B_r(G_n, k₀), G_n ~ PA(π)_n, and the
/// π-Pólya point tree, for every n in `grid` and every radius in `radii`.
///
/// One sample of radius max(radii) serves all radii. Point-tree samples come
/// from grid slot 0 and are shared by all n. A point-tree sample cut off by
/// `node_cap` counts as its own shape, which can only increase the TV; rows
/// with more than 1% such samples are flagged.
pub fn local_limit(
    model: &FitnessModel,
    grid: &[usize],
    radii: &[usize],
    reps: u64,
    node_cap: usize,
    seed: u64,
) -> Result<Table> {
    check_grid(grid)?;
    if reps == 0 {
        bail!("reps must be positive");
    }
    let r_max = radii.iter().copied().max().context("no radius given")?;
    let truncated_key = |r: usize| format!("truncated@{r}");

    let mut limit: Vec<EmpiricalDistribution<String>> = radii.iter().map(|_| EmpiricalDistribution::new()).collect();
    let mut truncated = 0u64;
    for i in 0..reps {
        let ball = sample_pi_polya_point_tree(model, r_max, node_cap, &mut substream(seed, i));
        truncated += u64::from(ball.truncated());
        for (dist, &r) in limit.iter_mut().zip(radii) {
            dist.add(if ball.truncated() {
                truncated_key(r)
            } else {
                canonical_code_to_depth(&ball, r).0
            });
        }
    }
    let truncated_fraction = truncated as f64 / reps as f64;

    let mut table = Table::new(LOCAL_LIMIT_COLUMNS);
    for (g, &n) in grid.iter().enumerate() {
        let fixed = model.point_mass_value().map(|v| FitnessSequence::constant(model, n, v)).transpose()?;
        let mut graph: Vec<EmpiricalDistribution<String>> = radii.iter().map(|_| EmpiricalDistribution::new()).collect();
        for i in 0..reps {
            let mut rng = substream(seed, stream(g, i));
            let seq = match &fixed {
                Some(s) => s.clone(),
                None => sample_fitness_sequence(model, n, &mut rng)?,
            };
            let tree = generate_sequential(&seq, &mut rng);
            let root = uniform_vertex(n, &mut rng);
            let ball = explore_neighborhood_sparse(&tree, root, r_max)?;
            for (dist, &r) in graph.iter_mut().zip(radii) {
                dist.add(canonical_code_to_depth(&ball, r).0);
            }
        }
        for ((g_dist, l_dist), &r) in graph.iter().zip(&limit).zip(radii) {
            let tv = tv_distance(g_dist, l_dist)?;
            table.push(vec![
                n.into(),
                r.into(),
                reps.into(),
                tv.into(),
                truncated_fraction.into(),
                (truncated_fraction > 0.01).into(),
            ]);
        }
    }
    Ok(table)
}

/// Empirical degree laws at a uniform vertex (D⁰) and at the recipient of
/// its outgoing edge (D¹), with the limiting pmfs.
#[derive(Debug, Clone)]
pub struct DegreeExperiment {
    pub n: usize,
    pub reps: u64,
    pub k_max: u64,
    pub root: EmpiricalDistribution<u64>,
    pub ancestor: EmpiricalDistribution<u64>,
    pub root_pmf: PmfTable,
    pub ancestor_pmf: PmfTable,
    pub tv_root: f64,
    pub tv_ancestor: f64,
}

pub const DEGREE_COLUMNS: &[&str] = &["k", "empirical_root", "pmf_root", "empirical_ancestor", "pmf_ancestor"];

impl DegreeExperiment {
    /// Rows k = 1..=k_max and a final `>k_max` row holding all remaining
    /// mass, so every probability column sums to one.
    pub fn table(&self) -> Table {
        let mut t = Table::new(DEGREE_COLUMNS);
        let (mut er, mut pr, mut ea, mut pa) = (0.0, 0.0, 0.0, 0.0);
        for k in 1..=self.k_max {
            let row = [
                self.root.prob(&k),
                self.root_pmf.get(k),
                self.ancestor.prob(&k),
                self.ancestor_pmf.get(k),
            ];
            er += row[0];
            pr += row[1];
            ea += row[2];
            pa += row[3];
            t.push(vec![k.into(), row[0].into(), row[1].into(), row[2].into(), row[3].into()]);
        }
        let tail = |emp: &EmpiricalDistribution<u64>, covered: f64| {
            if emp.total() == 0 {
                0.0
            } else {
                (1.0 - covered).max(0.0)
            }
        };
        t.push(vec![
            format!(">{}", self.k_max).into(),
            tail(&self.root, er).into(),
            (1.0 - pr).max(0.0).into(),
            tail(&self.ancestor, ea).into(),
            (1.0 - pa).max(0.0).into(),
        ]);
        t
    }
}

/// Point-mass models use the exact tree-free sampler; other models build a
/// tree per replicate. The vertex-1 root (no outgoing edge) contributes to
/// D⁰ only.
pub fn degree_experiment(model: &FitnessModel, n: usize, reps: u64, k_max: u64, seed: u64) -> Result<DegreeExperiment> {
    if n < 2 {
        bail!("n must be at least 2");
    }
    if reps == 0 || k_max == 0 {
        bail!("reps and k-max must be positive");
    }
    let mut root = EmpiricalDistribution::new();
    let mut ancestor = EmpiricalDistribution::new();
    let fast = model.point_mass_value().map(|v| PointMassDegreeSampler::new(n, model.x1(), v));
    for i in 0..reps {
        let mut rng = substream(seed, i);
        let d = match &fast {
            Some(s) => s.sample(&mut rng),
            None => {
                let seq = sample_fitness_sequence(model, n, &mut rng)?;
                let tree = generate_sequential(&seq, &mut rng);
                let k0 = uniform_vertex(n, &mut rng);
                uniform_vertex_degrees(&tree, k0)
            }
        };
        root.add(d.degree as u64);
        if let Some(p) = d.parent_degree {
            ancestor.add(p as u64);
        }
    }
    let root_pmf = PmfTable::root(model, k_max)?;
    let ancestor_pmf = PmfTable::ancestor(model, k_max)?;
    let tv_root = tv_to_pmf(&root, |k| root_pmf.get(k), k_max);
    let tv_ancestor = tv_to_pmf(&ancestor, |k| ancestor_pmf.get(k), k_max);
    Ok(DegreeExperiment {
        n,
        reps,
        k_max,
        root,
        ancestor,
        root_pmf,
        ancestor_pmf,
        tv_root,
        tv_ancestor,
    })
}

pub const COUPLE_COLUMNS: &[&str] = &[
    "n",
    "probe_kind",
    "reps",
    "rate_y_vs_y_hat",
    "rate_y_hat_vs_v_hat",
    "rate_v_hat_vs_v",
    "total_rate",
];

/// Root-case coupling reports over the grid. The fitness sequence for grid
/// point g comes from slot-0 stream g; the coupling replicates use the seed
/// offset by g.
pub fn couple(model: &FitnessModel, grid: &[usize], reps: u64, seed: u64) -> Result<Vec<CouplingReport>> {
    check_grid(grid)?;
    grid.iter()
        .enumerate()
        .map(|(g, &n)| {
            let seq = fitness_for(model, n, &mut substream(seed, g as u64))?;
            Ok(coupling_run(&seq, &ProbeContext::Root { u0: None }, reps, seed.wrapping_add(g as u64 + 1))?)
        })
        .collect()
}

pub fn couple_table(reports: &[CouplingReport]) -> Table {
    let mut t = Table::new(COUPLE_COLUMNS);
    for r in reports {
        let [a, b, c] = r.stage_rates();
        t.push(vec![
            r.n.into(),
            r.probe_kind.as_str().into(),
            r.replicates.into(),
            a.into(),
            b.into(),
            c.into(),
            r.total_failure_rate.into(),
        ]);
    }
    t
}

/// E[S_{k,n}^p] for every k in `ks` and p = 1..=p_max.
pub fn moments_table(seq: &FitnessSequence, ks: &[usize], p_max: u32) -> Result<Table> {
    let mut t = Table::new(&["k", "p", "moment"]);
    for &k in ks {
        for p in 1..=p_max {
            t.push(vec![k.into(), (p as u64).into(), s_moment_exact(seq, k, p)?.into()]);
        }
    }
    Ok(t)
}

/// E[W_{k,m} + x_k | W_{k,l} = w] for k = 1..=l.
pub fn mori_table(seq: &FitnessSequence, l: usize, m: usize, w: u64) -> Result<Table> {
    let mut t = Table::new(&["k", "l", "m", "w", "conditional_mean"]);
    for k in 1..=l {
        t.push(vec![
            k.into(),
            l.into(),
            m.into(),
            w.into(),
            mori_conditional_mean(seq, k, l, m, w)?.into(),
        ]);
    }
    Ok(t)
}

pub const DIAGNOSE_COLUMNS: &[&str] = &["n", "k_min", "reps", "mean_max_deviation", "concentration_frequency"];

/// Mean of max_{k ≥ ⌈n^χ⌉} |S_{k,n} − (k/n)^χ| over `reps` urns, and the
/// frequency of the concentration event (α = 2/3) over `reps` fitness draws.
/// Grid point g draws its fitness sequences from stream (g, i) and its urns
/// from the seed offset by g.
pub fn diagnose(model: &FitnessModel, grid: &[usize], reps: u64, seed: u64) -> Result<Table> {
    check_grid(grid)?;
    if reps == 0 {
        bail!("reps must be positive");
    }
    let mut t = Table::new(DIAGNOSE_COLUMNS);
    for (g, &n) in grid.iter().enumerate() {
        let phi = default_phi(n, model.chi());
        let mut hits = 0u64;
        let mut first = None;
        for i in 0..reps {
            let seq = fitness_for(model, n, &mut substream(seed, stream(g, i)))?;
            hits += u64::from(check_concentration_event(&seq, 2.0 / 3.0, phi)?);
            if first.is_none() {
                first = Some(seq);
            }
        }
        let seq = first.expect("reps > 0");
        let profile = s_deviation_profile(&seq, reps as usize, seed.wrapping_add(g as u64 + 1))?;
        t.push(vec![
            n.into(),
            profile.k_min.into(),
            reps.into(),
            profile.max_abs_dev.into(),
            (hits as f64 / reps as f64).into(),
        ]);
    }
    Ok(t)
}
