//! `unitsum`: double-base expansions, unit relations, obstruction
//! certificates and simplest-cubic unit sums from the command line.
//!
//! Exit codes: 0 success, 2 nothing found, 3 invalid input, 4 step or
//! budget cap reached, 5 verification failure.

use std::io::{self, Read, Write};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;
use thiserror::Error;

use unitsum::cubic::{
    evaluate_representation, represent_unit_sums, three_relation, CubicElement, CubicError,
    CubicParams,
};
use unitsum::double_base::{
    evaluate_expansion, expand_extended, expand_with, weight, BasePair, DoubleBaseError, Expansion,
    PQRational, SeedMethod,
};
use unitsum::engine::{EngineError, ReductionPolicy};
use unitsum::oracle::{
    min_weight_bruteforce, sweep_verify, ExponentBox, OracleError, OracleOptions, SweepError,
};
use unitsum::relations::{
    find_extended_relation, find_obstruction, find_plain_relation, ExtendedRelation,
    ObstructionCertificate, RelationForm,
};

#[derive(Parser, Debug)]
#[command(
    name = "unitsum",
    version,
    about = "Unit sums and signed double-base expansions"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct BaseArgs {
    #[arg(long)]
    p: String,
    #[arg(long)]
    q: String,
}

impl BaseArgs {
    fn parse(&self) -> Result<BasePair, CliError> {
        BasePair::new(parse_int(&self.p)?, parse_int(&self.q)?).map_err(CliError::from)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Signed expansion of an integer.
    Expand {
        #[command(flatten)]
        base: BaseArgs,
        /// Largest relation exponent searched.
        #[arg(long, default_value_t = 64)]
        max_exp: u32,
        #[arg(long, default_value = "padic")]
        seed_method: SeedMethod,
        #[arg(allow_hyphen_values = true)]
        value: String,
    },
    /// Extended expansion of n / (p^a q^b), given as "n" or "n/m".
    ExpandExtended {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 64)]
        max_exp: u32,
        #[arg(allow_hyphen_values = true)]
        value: String,
    },
    /// Check an expansion document (file path, or stdin when omitted or "-").
    Verify { input: Option<String> },
    /// Relation 2 = |p^x - q^y| (or an extended one); prints an obstruction
    /// certificate when none exists.
    FindRelation {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 64)]
        max_exp: u32,
        #[arg(long, default_value_t = 1000)]
        max_modulus: u64,
        /// Also search the forms with negative exponents.
        #[arg(long)]
        extended: bool,
    },
    /// Modular certificate that 2 = |p^x - q^y| has no solution.
    Obstruct {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 1000)]
        max_modulus: u64,
    },
    /// Brute-force minimal-weight expansion within an exponent box.
    MinWeight {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 6)]
        max_weight: usize,
        #[arg(long)]
        i_max: Option<u32>,
        #[arg(long)]
        j_max: Option<u32>,
        #[arg(long, default_value_t = 200_000_000)]
        budget: u128,
        #[arg(allow_hyphen_values = true)]
        value: String,
    },
    /// Unit-sum representation of c0 + c1 alpha + c2 alpha^2 in a simplest cubic field.
    CubicRepr {
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, default_value_t = 1_000_000)]
        max_steps: u64,
        #[arg(allow_hyphen_values = true)]
        c0: String,
        #[arg(allow_hyphen_values = true)]
        c1: String,
        #[arg(allow_hyphen_values = true)]
        c2: String,
    },
    /// Check the three-unit relation for a range of parameters.
    CubicVerify {
        #[arg(long, allow_hyphen_values = true)]
        a_from: i64,
        #[arg(long, allow_hyphen_values = true)]
        a_to: i64,
    },
    /// CSV of seed weight against replacement steps for a range of integers.
    BenchSteps {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 64)]
        max_exp: u32,
    },
    /// Expand and check every integer of a range; CSV report.
    Sweep {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 64)]
        max_exp: u32,
        /// Compare each weight with the brute-force minimum.
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    NotFound(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    Cap(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::NotFound(_) => 2,
            CliError::Invalid(_) | CliError::Io(_) => 3,
            CliError::Cap(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

impl From<DoubleBaseError> for CliError {
    fn from(e: DoubleBaseError) -> Self {
        match e {
            DoubleBaseError::NoRelationFound(_) => CliError::NotFound(e.to_string()),
            DoubleBaseError::RelationInvalid => CliError::Verification(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CubicError> for CliError {
    fn from(e: CubicError) -> Self {
        match e {
            CubicError::Engine(EngineError::IterationCapExceeded { .. }) => {
                CliError::Cap(e.to_string())
            }
            CubicError::RelationBroken(_) => CliError::Verification(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::BudgetExceeded { .. } => CliError::Cap(e.to_string()),
            OracleError::BoxTooLarge(_) => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

fn parse_int(s: &str) -> Result<BigInt, CliError> {
    BigInt::from_str(s.trim()).map_err(|_| CliError::Invalid(format!("not an integer: {s:?}")))
}

fn parse_rational(s: &str) -> Result<BigRational, CliError> {
    BigRational::from_str(s.trim()).map_err(|_| CliError::Invalid(format!("not a rational: {s:?}")))
}

fn print_expansion(out: &mut String, format: Format, e: &Expansion, value: &str) {
    match format {
        Format::Json => out.push_str(&e.to_json()),
        Format::Text => out.push_str(&format!("{value} = {e}\nweight {}", weight(e))),
        Format::Csv => {
            out.push_str("d,i,j");
            for t in e.terms() {
                out.push_str(&format!("\n{},{},{}", t.d, t.i, t.j));
            }
        }
    }
    out.push('\n');
}

fn relation_text(rel: &ExtendedRelation, base: &BasePair) -> String {
    let (a, b) = rel.search_exponents();
    let (p, q) = (base.p(), base.q());
    let pm = if rel.sign > 0 { "+" } else { "-" };
    match rel.form {
        RelationForm::Plain if rel.a != 0 => format!("2 = {p}^{a} - {q}^{b}"),
        RelationForm::Plain => format!("2 = {q}^{b} - {p}^{a}"),
        RelationForm::PInverse => format!("2 = {p}^-{a} * {q}^{b} {pm} {p}^-{a}"),
        RelationForm::QInverse => format!("2 = {p}^{a} * {q}^-{b} {pm} {q}^-{b}"),
    }
}

#[derive(Serialize)]
struct RelationDoc {
    p: String,
    q: String,
    form: RelationForm,
    a: i64,
    b: i64,
    c: i64,
    d: i64,
    sign: i8,
}

fn print_relation(out: &mut String, format: Format, rel: &ExtendedRelation, base: &BasePair) {
    match format {
        Format::Json => out.push_str(
            &serde_json::to_string(&RelationDoc {
                p: base.p().to_string(),
                q: base.q().to_string(),
                form: rel.form,
                a: rel.a,
                b: rel.b,
                c: rel.c,
                d: rel.d,
                sign: rel.sign,
            })
            .expect("relation serializes"),
        ),
        Format::Text => out.push_str(&relation_text(rel, base)),
        Format::Csv => out.push_str(&format!(
            "form,a,b,c,d,sign\n{},{},{},{},{},{}",
            serde_json::to_value(rel.form)
                .expect("form serializes")
                .as_str()
                .unwrap_or(""),
            rel.a,
            rel.b,
            rel.c,
            rel.d,
            rel.sign
        )),
    }
    out.push('\n');
}

fn print_certificate(out: &mut String, format: Format, c: &ObstructionCertificate) {
    match format {
        Format::Json => out.push_str(&c.to_json()),
        Format::Text | Format::Csv => {
            let list = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
            out.push_str(&format!(
                "no solution of 2 = |{p}^x - {q}^y|: modulo {m}, {p}^x lies in {{{}}} and {q}^y in {{{}}}",
                list(&c.p_orbit),
                list(&c.q_orbit),
                p = c.p,
                q = c.q,
                m = c.modulus,
            ));
        }
    }
    out.push('\n');
}

fn read_input(path: Option<&str>) -> Result<String, CliError> {
    let mut s = String::new();
    match path {
        None | Some("-") => {
            io::stdin().read_to_string(&mut s)?;
        }
        Some(p) => s = std::fs::read_to_string(p)?,
    }
    Ok(s)
}

fn int_range(from: &str, to: &str) -> Result<(BigInt, BigInt), CliError> {
    let (lo, hi) = (parse_int(from)?, parse_int(to)?);
    if lo > hi {
        return Err(CliError::Invalid(format!("empty range {lo}..={hi}")));
    }
    Ok((lo, hi))
}

#[derive(Serialize)]
struct CubicTermDoc {
    k: usize,
    i: i64,
    j: i64,
    c: u64,
}

#[derive(Serialize)]
struct CubicReprDoc {
    a: String,
    coords: [String; 3],
    steps: u64,
    terms: Vec<CubicTermDoc>,
}

fn run(cli: Cli, out: &mut String, diag: &mut String) -> Result<(), CliError> {
    let format = cli.format;
    match cli.command {
        Command::Expand {
            base,
            max_exp,
            seed_method,
            value,
        } => {
            let base = base.parse()?;
            let v = parse_int(&value)?;
            let r = expand_with(&v, &base, max_exp, seed_method)?;
            if evaluate_expansion(&r.expansion) != BigRational::from_integer(v.clone()) {
                return Err(CliError::Verification(
                    "expansion does not evaluate to the input".into(),
                ));
            }
            print_expansion(out, format, &r.expansion, &v.to_string());
            diag.push_str(&format!("steps {} (seed weight {})\n", r.steps, r.w_init));
        }
        Command::ExpandExtended {
            base,
            max_exp,
            value,
        } => {
            let base = base.parse()?;
            let x = parse_rational(&value)?;
            let pq = PQRational::from_rational(&x, &base)?;
            let e = expand_extended(&pq, &base, max_exp)?;
            if evaluate_expansion(&e) != x {
                return Err(CliError::Verification(
                    "expansion does not evaluate to the input".into(),
                ));
            }
            print_expansion(out, format, &e, &x.to_string());
        }
        Command::Verify { input } => {
            let text = read_input(input.as_deref())?;
            let (e, claimed) = Expansion::from_json(&text)?;
            let value = evaluate_expansion(&e);
            let valid = value == claimed;
            match format {
                Format::Json => out.push_str(&format!(
                    "{{\"value\":\"{value}\",\"claimed\":\"{claimed}\",\"status\":\"{}\"}}\n",
                    if valid { "valid" } else { "invalid" }
                )),
                _ => out.push_str(&format!(
                    "value {value}, claimed {claimed}: {}\n",
                    if valid { "valid" } else { "invalid" }
                )),
            }
            if !valid {
                return Err(CliError::Verification(format!(
                    "evaluates to {value}, not {claimed}"
                )));
            }
        }
        Command::FindRelation {
            base,
            max_exp,
            max_modulus,
            extended,
        } => {
            let base = base.parse()?;
            let found = if extended {
                find_extended_relation(&base, max_exp)
            } else {
                find_plain_relation(&base, max_exp).map(|r| r.to_extended())
            };
            if let Some(rel) = found {
                print_relation(out, format, &rel, &base);
                return Ok(());
            }
            match find_obstruction(&base, max_modulus) {
                Some(c) => print_certificate(out, format, &c),
                None => {
                    out.push_str("inconclusive: no relation and no certificate within bounds\n")
                }
            }
            return Err(CliError::NotFound(format!(
                "no relation for 2 with exponents up to {max_exp}"
            )));
        }
        Command::Obstruct { base, max_modulus } => {
            let base = base.parse()?;
            match find_obstruction(&base, max_modulus) {
                Some(c) => print_certificate(out, format, &c),
                None => {
                    return Err(CliError::NotFound(format!(
                        "inconclusive: no certificate with modulus up to {max_modulus}"
                    )))
                }
            }
        }
        Command::MinWeight {
            base,
            max_weight,
            i_max,
            j_max,
            budget,
            value,
        } => {
            let base = base.parse()?;
            let v = parse_int(&value)?;
            let default = ExponentBox::default_for(&v, &base);
            let bx = ExponentBox {
                i_max: i_max.unwrap_or(default.i_max),
                j_max: j_max.unwrap_or(default.j_max),
            };
            let opts = OracleOptions { max_weight, budget };
            match min_weight_bruteforce(&v, &base, bx, &opts)? {
                Some(w) => {
                    print_expansion(out, format, &w.expansion, &v.to_string());
                    diag.push_str(&format!("box i <= {}, j <= {}\n", bx.i_max, bx.j_max));
                }
                None => {
                    return Err(CliError::NotFound(format!(
                        "no expansion of weight <= {max_weight} with i <= {}, j <= {}",
                        bx.i_max, bx.j_max
                    )))
                }
            }
        }
        Command::CubicRepr {
            a,
            max_steps,
            c0,
            c1,
            c2,
        } => {
            let params = CubicParams::new(parse_int(&a)?);
            let c = [parse_int(&c0)?, parse_int(&c1)?, parse_int(&c2)?];
            let beta = CubicElement::new(params.clone(), c);
            let policy = ReductionPolicy {
                max_steps,
                ..Default::default()
            };
            let r = represent_unit_sums(&beta, &policy)?;
            if evaluate_representation(&r.representation, &params) != beta {
                return Err(CliError::Verification(
                    "representation does not evaluate to the input".into(),
                ));
            }
            let terms: Vec<CubicTermDoc> = r
                .representation
                .iter()
                .map(|(idx, c)| CubicTermDoc {
                    k: idx.k,
                    i: idx.exponent[0],
                    j: idx.exponent[1],
                    c,
                })
                .collect();
            match format {
                Format::Json => {
                    out.push_str(
                        &serde_json::to_string(&CubicReprDoc {
                            a: params.a().to_string(),
                            coords: beta.coords().clone().map(|x| x.to_string()),
                            steps: r.steps,
                            terms,
                        })
                        .expect("representation serializes"),
                    );
                    out.push('\n');
                }
                Format::Csv => {
                    out.push_str("sign,i,j,coefficient\n");
                    for t in &terms {
                        let sign = if t.k == 0 { 1 } else { -1 };
                        out.push_str(&format!("{sign},{},{},{}\n", t.i, t.j, t.c));
                    }
                }
                Format::Text => {
                    out.push_str(&format!("{beta} =\n"));
                    for t in &terms {
                        let sign = if t.k == 0 { '+' } else { '-' };
                        out.push_str(&format!(
                            "  {sign} {} * alpha1^{} * alpha2^{}\n",
                            t.c, t.i, t.j
                        ));
                    }
                    out.push_str(&format!(
                        "{} terms, max coefficient {}, {} steps\n",
                        terms.len(),
                        r.representation.max_coefficient(),
                        r.steps
                    ));
                }
            }
        }
        Command::CubicVerify { a_from, a_to } => {
            if a_from > a_to {
                return Err(CliError::Invalid(format!("empty range {a_from}..={a_to}")));
            }
            let total = (a_to - a_from + 1) as usize;
            let mut failed = Vec::new();
            for a in a_from..=a_to {
                if three_relation(&CubicParams::from_i64(a)).is_err() {
                    failed.push(a);
                }
            }
            let ok = total - failed.len();
            out.push_str(&format!("{ok}/{total} relations verified, sum = 3\n"));
            if !failed.is_empty() {
                return Err(CliError::Verification(format!(
                    "relation fails for a in {failed:?}"
                )));
            }
        }
        Command::BenchSteps {
            base,
            from,
            to,
            max_exp,
        } => {
            let base = base.parse()?;
            let (lo, hi) = int_range(&from, &to)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["n", "w_init", "steps", "weight_final"])?;
            let mut n = lo;
            while n <= hi {
                let r = expand_with(&n, &base, max_exp, SeedMethod::PAdic)?;
                w.write_record([
                    n.to_string(),
                    r.w_init.to_string(),
                    r.steps.to_string(),
                    weight(&r.expansion).to_string(),
                ])?;
                n += 1;
            }
            out.push_str(
                &String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
                    .expect("csv is utf-8"),
            );
        }
        Command::Sweep {
            base,
            from,
            to,
            max_exp,
            oracle,
        } => {
            let base = base.parse()?;
            let (lo, hi) = int_range(&from, &to)?;
            let opts = OracleOptions::default();
            let report = sweep_verify(&lo, &hi, &base, max_exp, oracle.then_some(&opts)).map_err(
                |e| match e {
                    SweepError::Expansion { source, v } => match CliError::from(source) {
                        CliError::NotFound(m) => CliError::NotFound(format!("v = {v}: {m}")),
                        other => other,
                    },
                    SweepError::Oracle { source, v } => match CliError::from(source) {
                        CliError::Cap(m) => CliError::Cap(format!("v = {v}: {m}")),
                        other => other,
                    },
                    SweepError::Violation { .. } => CliError::Verification(e.to_string()),
                },
            )?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "v",
                "status",
                "weight_algo",
                "weight_oracle",
                "steps",
                "w_init",
            ])?;
            for row in &report.rows {
                w.write_record([
                    row.v.to_string(),
                    row.status.to_string(),
                    row.weight_algo.to_string(),
                    row.weight_oracle.map(|x| x.to_string()).unwrap_or_default(),
                    row.steps.to_string(),
                    row.w_init.to_string(),
                ])?;
            }
            out.push_str(
                &String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
                    .expect("csv is utf-8"),
            );
            diag.push_str(&format!(
                "{}/{} passed, max steps {}, max weight {}\n",
                report.passed, report.checked, report.max_steps, report.max_weight
            ));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut out = String::new();
    let mut diag = String::new();
    let result = run(cli, &mut out, &mut diag);
    let _ = io::stdout().write_all(out.as_bytes());
    let _ = io::stderr().write_all(diag.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
