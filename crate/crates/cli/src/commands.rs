use ncprob::cumulants::{convolve as convolve_in, make_nu, moments_to_cumulants, monotone_power, power_eta};
use ncprob::dist::moments_of;
use ncprob::experiments::{run_item, ITEMS};
use ncprob::flow::{cp_h_eval, picard_flow, recover_sigma as recover, rk4_flow};
use ncprob::limits::{run_bp, ArrayRule, TriangularArray};
use ncprob::ncseries::{evolution_check as evolution, monotone_convolve};
use ncprob::random::{random_hermitian, random_matrix, random_unit_vector, split};
use ncprob::{CMatrix, Error, Eta, Generator, HalfPlanePoint, Model, MomentTensor, RealizedCP, Species, C64};
use serde::{Deserialize, Serialize};

use crate::output::{load, num, Context, Failure};
use crate::{
    BpArgs, CheckArgs, ConvolveArgs, CumulantsArgs, EvolutionArgs, FlowArgs, FormatArg, MethodArg, PowerArgs,
    RecoverArgs, RuleArg, SigmaArg, Source,
};

const DEFAULT_ORDER: usize = 6;

#[derive(Deserialize)]
struct Peek {
    #[serde(rename = "type")]
    kind: Option<String>,
}

/// Moments described by `source`: a tensor file, a realized model, or `nu^{gamma,sigma}`
/// in the species `--law` (falling back to `species`).
fn moments(source: &Source, species: Species) -> Result<MomentTensor, Failure> {
    let peek: Peek = load(&source.input)?;
    if peek.kind.is_none() {
        let m: MomentTensor = load(&source.input)?;
        return match source.order {
            Some(n) if n > m.order() => Err(Failure::invalid(format!(
                "{}: tensor has order {}, --order {n} requested",
                source.input.display(),
                m.order()
            ))),
            Some(n) => Ok(m.truncate(n)),
            None => Ok(m),
        };
    }
    let order = source.order.unwrap_or(DEFAULT_ORDER);
    Ok(match load::<Model>(&source.input)? {
        Model::Realized(r) => moments_of(&r, order)?,
        Model::Cp { gamma, sigma } => make_nu(&gamma, &sigma, source.law.unwrap_or(species), order)?,
    })
}

fn load_cp(path: &std::path::Path) -> Result<(CMatrix, RealizedCP), Failure> {
    match load::<Model>(path)? {
        Model::Cp { gamma, sigma } => Ok((gamma, sigma)),
        Model::Realized(_) => Err(Failure::invalid(format!(
            "{}: expected a model of type \"cp\"",
            path.display()
        ))),
    }
}

pub fn cumulants(ctx: &Context, a: &CumulantsArgs) -> Result<(), Failure> {
    let m = moments(&a.source, a.species)?;
    ctx.json("cumulants", &moments_to_cumulants(&m, a.species)?)
}

pub fn convolve(ctx: &Context, a: &ConvolveArgs) -> Result<(), Failure> {
    let m1 = moments(&a.source, a.species)?;
    let other = Source {
        input: a.other.clone(),
        order: a.source.order,
        law: a.source.law,
    };
    let m2 = moments(&other, a.species)?;
    let out = match a.species {
        Species::Monotone => monotone_convolve(&m1, &m2)?,
        s => convolve_in(&m1, &m2, s)?,
    };
    ctx.json("convolve", &out)
}

pub fn power(ctx: &Context, a: &PowerArgs) -> Result<(), Failure> {
    let m = moments(&a.source, Species::Monotone)?;
    let out = match (a.t, &a.eta) {
        (Some(t), None) => monotone_power(&m, t)?,
        (None, Some(path)) => power_eta(&m, &load::<Eta>(path)?.0)?,
        _ => return Err(Failure::invalid("give exactly one of --t and --eta")),
    };
    ctx.json("power", &out)
}

#[derive(Serialize)]
struct DivergenceReport {
    kind: &'static str,
    message: String,
    iterations: Option<usize>,
    residual: Option<f64>,
}

pub fn flow(ctx: &Context, a: &FlowArgs) -> Result<(), Failure> {
    let (gamma, sigma) = load_cp(&a.generator)?;
    let g = Generator::new(gamma, sigma)?;
    let d = g.d();
    let b = match (&a.b, a.b_imag) {
        (Some(path), None) => {
            let p = HalfPlanePoint::new(load::<CMatrix>(path)?, d)?;
            if p.level() != a.level {
                return Err(Failure::invalid(format!(
                    "{}: matrix is at level {}, --level {} given",
                    path.display(),
                    p.level(),
                    a.level
                )));
            }
            p
        }
        (None, Some(lambda)) => HalfPlanePoint::scalar_imag(lambda, d, a.level)?,
        _ => return Err(Failure::invalid("give exactly one of --b and --b-imag")),
    };
    let run = match a.method {
        MethodArg::Rk4 => rk4_flow(&g, &b, a.t_max, a.dt),
        MethodArg::Picard => picard_flow(&g, &b, a.t_max, a.grid_steps, a.max_iters, a.tol),
    };
    let f = match run {
        Ok(f) => f,
        Err(e) if e.is_numerical() => {
            let (iterations, residual) = match e {
                Error::Divergence { iterations, residual } => (Some(iterations), Some(residual)),
                _ => (None, None),
            };
            let report = DivergenceReport {
                kind: if iterations.is_some() { "divergence" } else { "numerical" },
                message: e.to_string(),
                iterations,
                residual,
            };
            return Err(ctx.numerical("flow", e.to_string(), &report));
        }
        Err(e) => return Err(e.into()),
    };
    let n = b.value().dim();
    let mut body = String::from("t");
    for r in 0..n {
        for c in 0..n {
            body.push_str(&format!(",re_{r}_{c},im_{r}_{c}"));
        }
    }
    body.push('\n');
    for (t, v) in f.times.iter().zip(&f.values) {
        body.push_str(&num(*t));
        for z in v.row_major() {
            body.push(',');
            body.push_str(&num(z.re));
            body.push(',');
            body.push_str(&num(z.im));
        }
        body.push('\n');
    }
    ctx.csv("flow", &body)
}

pub fn bp(ctx: &Context, a: &BpArgs) -> Result<(), Failure> {
    let one = C64::new(1.0, 0.0);
    let (gamma, sigma) = match &a.model {
        Some(path) => load_cp(path)?,
        None => {
            let sigma = match a.sigma {
                SigmaArg::Unit => RealizedCP::new(1, 1, CMatrix::zeros(1), vec![vec![one]])?,
                SigmaArg::Zero => RealizedCP::zero(1),
            };
            (CMatrix::scalar(1, C64::new(a.gamma, 0.0)), sigma)
        }
    };
    let arr = match a.rule {
        RuleArg::BooleanSeed => TriangularArray::new(gamma, sigma, a.schedule.clone(), ArrayRule::BooleanSeed, a.order)?,
        RuleArg::Clt => {
            // sigma is drawn from the seed: E[Y (b (x) 1) Y] for a random Hermitian Y
            let d = gamma.dim();
            let mut r = split(ctx.seed, 1);
            let y = random_hermitian(&mut r, 2 * d).scale_re(0.7);
            let v = random_unit_vector(&mut r, 2);
            TriangularArray::clt(gamma, y, v, a.schedule.clone(), a.order)?
        }
    };
    let rep = run_bp(&arr, &a.species)?;
    match a.format {
        FormatArg::Json => ctx.json("bp", &rep),
        FormatArg::Csv => ctx.csv("bp", &rep.to_csv()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WordsFile {
    words: Vec<Vec<CMatrix>>,
}

#[derive(Serialize)]
struct Recovered {
    word_length: usize,
    recovered: CMatrix,
    direct: CMatrix,
    error: f64,
}

#[derive(Serialize)]
struct RecoverReport {
    radius: f64,
    max_error: f64,
    words: Vec<Recovered>,
}

pub fn recover_sigma(ctx: &Context, a: &RecoverArgs) -> Result<(), Failure> {
    let (_, sigma) = load_cp(&a.generator)?;
    let d = sigma.d();
    let words = match &a.words {
        Some(path) => load::<WordsFile>(path)?.words,
        None => {
            let mut r = split(ctx.seed, 2);
            (1..=4).map(|len| (0..len).map(|_| random_matrix(&mut r, d)).collect()).collect()
        }
    };
    let radius = a
        .radius
        .unwrap_or_else(|| if sigma.bound() > 0.0 { 1.0 / sigma.bound() } else { 1.0 });
    let mut out = Vec::with_capacity(words.len());
    for w in &words {
        let recovered = recover(|b| cp_h_eval(&sigma, b), w, d, radius)?;
        let direct = sigma.word(w)?;
        out.push(Recovered {
            word_length: w.len(),
            error: recovered.max_abs_diff(&direct),
            recovered,
            direct,
        });
    }
    let max_error = out.iter().map(|r| r.error).fold(0.0, f64::max);
    ctx.json(
        "recover-sigma",
        &RecoverReport {
            radius,
            max_error,
            words: out,
        },
    )
}

#[derive(Serialize)]
struct EvolutionReport {
    d: usize,
    order: usize,
    t_grid: Vec<f64>,
    residual: f64,
}

pub fn evolution_check(ctx: &Context, a: &EvolutionArgs) -> Result<(), Failure> {
    let m = moments(&a.source, Species::Monotone)?;
    let residual = evolution(&m, &a.t_grid)?;
    ctx.json(
        "evolution-check",
        &EvolutionReport {
            d: m.d(),
            order: m.order(),
            t_grid: a.t_grid.clone(),
            residual,
        },
    )
}

pub fn check(ctx: &Context, a: &CheckArgs) -> Result<(), Failure> {
    let items: Vec<usize> = match a.item {
        Some(i) => vec![i],
        None => (1..=ITEMS.len()).collect(),
    };
    let mut reports = Vec::with_capacity(items.len());
    for i in items {
        let rep = run_item(i, ctx.seed)?;
        eprintln!("{}", rep.line());
        reports.push(rep);
    }
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.item).collect();
    if reports.len() == 1 {
        ctx.json("check", &reports[0])?;
    } else {
        ctx.json("check", &reports)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("criteria {failed:?} failed")))
    }
}
