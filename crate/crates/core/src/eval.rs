//! Success-rate-versus-horizon evaluation.
//!
//! For every sensing position `t` of a test trace the predictor sees the
//! `M` states ending at `t` and predicts `q_{t+T}` for each horizon `T`.
//! The success rate at `T` is the fraction of positions whose hard 0/1
//! prediction is correct.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::MarkovModel;
use crate::mlp::MlpModel;
use crate::statespace::StateSpace;
use crate::traffic::Trace;

/// Anything that maps a sensed window to per-horizon active probabilities.
pub trait Predictor: Sync {
    /// Probability of activity at horizons `1..=max_horizon`.
    fn active_curve(&self, sensed: &[u8], max_horizon: usize) -> Result<Vec<f64>>;
}

impl Predictor for MarkovModel {
    fn active_curve(&self, sensed: &[u8], max_horizon: usize) -> Result<Vec<f64>> {
        MarkovModel::active_curve(self, sensed, max_horizon)
    }
}

impl Predictor for MlpModel {
    fn active_curve(&self, sensed: &[u8], max_horizon: usize) -> Result<Vec<f64>> {
        if max_horizon > self.t_train() {
            return Err(Error::HorizonOutOfRange {
                horizon: max_horizon,
                max: self.t_train(),
            });
        }
        let mut out = self.forward(sensed)?;
        out.truncate(max_horizon);
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct EvalSpec<'a> {
    /// Column name in comparison tables.
    pub label: String,
    /// Sensing length `M`.
    pub sensing: usize,
    pub max_horizon: usize,
    /// Spacing between consecutive sensing positions.
    pub stride: usize,
    pub test: &'a Trace,
    /// Training trace, checked against the test trace.
    pub train: Option<&'a Trace>,
    /// Permit evaluating on the training trace itself.
    pub allow_same_trace: bool,
}

impl<'a> EvalSpec<'a> {
    pub fn new(label: impl Into<String>, sensing: usize, max_horizon: usize, test: &'a Trace) -> Self {
        EvalSpec {
            label: label.into(),
            sensing,
            max_horizon,
            stride: 1,
            test,
            train: None,
            allow_same_trace: false,
        }
    }

    pub fn trained_on(mut self, train: &'a Trace) -> Self {
        self.train = Some(train);
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Last sensed slot of every evaluated position.
    pub fn positions(&self) -> Result<Vec<usize>> {
        if self.sensing == 0 || self.max_horizon == 0 || self.stride == 0 {
            return Err(Error::invalid("sensing length, horizon and stride must be positive"));
        }
        let needed = self.sensing + self.max_horizon;
        if self.test.len() < needed {
            return Err(Error::TraceTooShort {
                needed,
                actual: self.test.len(),
            });
        }
        Ok((self.sensing - 1..self.test.len() - self.max_horizon)
            .step_by(self.stride)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub label: String,
    pub sensing: usize,
    pub stride: usize,
    pub test_trace: String,
    pub train_trace: Option<String>,
    pub n_positions: usize,
    /// Correct hard predictions per horizon, `T = index + 1`.
    pub correct: Vec<usize>,
    pub success_rate: Vec<f64>,
    pub brier: Vec<f64>,
    pub log_loss: Vec<f64>,
}

impl EvalReport {
    pub fn max_horizon(&self) -> usize {
        self.success_rate.len()
    }

    /// Mean success over horizons `from..=to`.
    pub fn mean_success(&self, from: usize, to: usize) -> f64 {
        let slice = &self.success_rate[from - 1..to];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    pub fn mean_success_all(&self) -> f64 {
        self.mean_success(1, self.max_horizon())
    }

    /// `T,success_rate,n_positions` with Brier score and log-loss appended.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,success_rate,n_positions,brier,log_loss\n");
        for k in 0..self.max_horizon() {
            writeln!(
                out,
                "{},{},{},{},{}",
                k + 1,
                self.success_rate[k],
                self.n_positions,
                self.brier[k],
                self.log_loss[k]
            )
            .unwrap();
        }
        out
    }

    /// Read back a report written by [`EvalReport::to_csv`]. Fields the CSV
    /// does not carry (traces, stride, sensing) are left empty.
    pub fn from_csv(label: impl Into<String>, path: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "T,success_rate,n_positions,brier,log_loss" => {}
            Some((i, h)) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    token: h.into(),
                    reason: "expected an evaluation report header".into(),
                })
            }
            None => return Err(Error::Format(format!("{path}: empty report"))),
        }
        let mut report = EvalReport {
            label: label.into(),
            sensing: 0,
            stride: 0,
            test_trace: String::new(),
            train_trace: None,
            n_positions: 0,
            correct: Vec::new(),
            success_rate: Vec::new(),
            brier: Vec::new(),
            log_loss: Vec::new(),
        };
        for (i, line) in lines {
            let bad = |token: &str, reason: &str| Error::Parse {
                path: path.into(),
                line: i + 1,
                token: token.into(),
                reason: reason.into(),
            };
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 5 {
                return Err(bad(line, "expected 5 fields"));
            }
            let t: usize = fields[0].parse().map_err(|_| bad(fields[0], "not a horizon"))?;
            if t != report.success_rate.len() + 1 {
                return Err(bad(fields[0], "horizons must run 1, 2, 3, ..."));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s, "not a number"));
            let rate = num(fields[1])?;
            let n: usize = fields[2].parse().map_err(|_| bad(fields[2], "not a count"))?;
            report.n_positions = n;
            report.correct.push((rate * n as f64).round() as usize);
            report.success_rate.push(rate);
            report.brier.push(num(fields[3])?);
            report.log_loss.push(num(fields[4])?);
        }
        if report.success_rate.is_empty() {
            return Err(Error::Format(format!("{path}: report has no rows")));
        }
        Ok(report)
    }
}

const LOG_CLAMP: f64 = 1e-12;

pub fn evaluate(spec: &EvalSpec<'_>, predictor: &dyn Predictor) -> Result<EvalReport> {
    if let Some(train) = spec.train {
        if !spec.allow_same_trace && train.states() == spec.test.states() {
            return Err(Error::invalid(
                "training and test traces are identical; set allow_same_trace to evaluate in-sample",
            ));
        }
    }
    let positions = spec.positions()?;
    let horizon = spec.max_horizon;

    // many positions share a sensed vector; predict each distinct one once
    let mut distinct: Vec<Vec<u8>> = positions
        .iter()
        .map(|&t| spec.test.window(t, spec.sensing))
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    let curves: Vec<Vec<f64>> = distinct
        .par_iter()
        .map(|s| predictor.active_curve(s, horizon))
        .collect::<Result<_>>()?;
    let lookup: HashMap<&[u8], &[f64]> = distinct
        .iter()
        .map(Vec::as_slice)
        .zip(curves.iter().map(Vec::as_slice))
        .collect();

    let q = spec.test.states();
    let mut correct = vec![0usize; horizon];
    let mut brier = vec![0.0; horizon];
    let mut log_loss = vec![0.0; horizon];
    for &t in &positions {
        let curve = lookup[spec.test.window(t, spec.sensing).as_slice()];
        for k in 0..horizon {
            let truth = q[t + k + 1];
            let p = curve[k];
            if u8::from(p > 0.5) == truth {
                correct[k] += 1;
            }
            let y = truth as f64;
            brier[k] += (p - y) * (p - y);
            let pc = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            log_loss[k] -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
    }
    let n = positions.len();
    Ok(EvalReport {
        label: spec.label.clone(),
        sensing: spec.sensing,
        stride: spec.stride,
        test_trace: spec.test.name().to_string(),
        train_trace: spec.train.map(|t| t.name().to_string()),
        n_positions: n,
        success_rate: correct.iter().map(|&c| c as f64 / n as f64).collect(),
        correct,
        brier: brier.into_iter().map(|b| b / n as f64).collect(),
        log_loss: log_loss.into_iter().map(|l| l / n as f64).collect(),
    })
}

/// One row of a dictionary-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub max_states: Option<usize>,
    pub states: usize,
    pub mean_success: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec<'a> {
    pub train: &'a Trace,
    pub test: &'a Trace,
    pub order: usize,
    pub sensing: usize,
    pub max_horizon: usize,
    pub stride: usize,
}

/// Rebuild the smart table under each cap (`None` = unlimited), re-estimate
/// and evaluate.
pub fn sweep_l(spec: &SweepSpec<'_>, caps: &[Option<usize>]) -> Result<Vec<SweepRow>> {
    caps.iter()
        .map(|&cap| {
            let space = StateSpace::smart(spec.train, spec.order, cap)?;
            let states = space.size();
            let mut model = MarkovModel::estimate(space, spec.train)?;
            model.meta_mut().max_states = cap;
            let eval = EvalSpec::new(
                format!("L={}", cap.map_or_else(|| "inf".into(), |c| c.to_string())),
                spec.sensing,
                spec.max_horizon,
                spec.test,
            )
            .trained_on(spec.train)
            .with_stride(spec.stride);
            let report = evaluate(&eval, &model)?;
            Ok(SweepRow {
                max_states: cap,
                states,
                mean_success: report.mean_success_all(),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("L,states,mean_success\n");
    for r in rows {
        let l = r.max_states.map_or_else(|| "inf".into(), |c| c.to_string());
        writeln!(out, "{l},{},{}", r.states, r.mean_success).unwrap();
    }
    out
}

fn check_horizons(reports: &[EvalReport]) -> Result<usize> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("nothing to compare"))?;
    let horizon = first.max_horizon();
    if let Some(r) = reports.iter().find(|r| r.max_horizon() != horizon) {
        return Err(Error::invalid(format!(
            "report {:?} covers T in [1, {}] but {:?} covers [1, {horizon}]",
            r.label,
            r.max_horizon(),
            first.label
        )));
    }
    Ok(horizon)
}

/// `T,<label1>,<label2>,...` with one success-rate column per report.
pub fn compare_csv(reports: &[EvalReport]) -> Result<String> {
    let horizon = check_horizons(reports)?;
    let mut out = String::from("T");
    for r in reports {
        out.push(',');
        out.push_str(&r.label.replace(',', ";"));
    }
    out.push('\n');
    for k in 0..horizon {
        write!(out, "{}", k + 1).unwrap();
        for r in reports {
            write!(out, ",{}", r.success_rate[k]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Self-contained SVG line chart: one polyline per report, success rate
/// against horizon.
pub fn compare_svg(reports: &[EvalReport], title: &str) -> Result<String> {
    let horizon = check_horizons(reports)?;
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_of = |t: usize| {
        if horizon == 1 {
            left + pw / 2.0
        } else {
            left + pw * (t - 1) as f64 / (horizon - 1) as f64
        }
    };
    let y_of = |r: f64| top + ph * (1.0 - r);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        xml_escape(title)
    )
    .unwrap();

    for k in 0..=5 {
        let r = k as f64 / 5.0;
        let y = y_of(r);
        writeln!(
            svg,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##,
            left + pw
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{r:.1}</text>"#,
            left - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    let ticks = horizon.min(10);
    for k in 0..=ticks {
        let t = 1 + (horizon - 1) * k / ticks.max(1);
        let x = x_of(t);
        writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{t}</text>"#,
            top + ph + 18.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">Prediction horizon T</text>"#,
        left + pw / 2.0,
        h - 16.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">Success rate</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    )
    .unwrap();

    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = r
            .success_rate
            .iter()
            .enumerate()
            .map(|(k, &s)| format!("{:.2},{:.2}", x_of(k + 1), y_of(s)))
            .collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = top + 16.0 + 20.0 * i as f64;
        let lx = left + pw + 14.0;
        writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            xml_escape(&r.label)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{generate_synthetic, SyntheticSpec};

    fn toy(n: usize, start: u8) -> Trace {
        generate_synthetic(&SyntheticSpec::periodic(3, n, start)).unwrap()
    }

    fn report(label: &str, rates: Vec<f64>) -> EvalReport {
        let h = rates.len();
        EvalReport {
            label: label.into(),
            sensing: 1,
            stride: 1,
            test_trace: "t".into(),
            train_trace: None,
            n_positions: 10,
            correct: rates.iter().map(|r| (r * 10.0) as usize).collect(),
            success_rate: rates,
            brier: vec![0.0; h],
            log_loss: vec![0.0; h],
        }
    }

    #[test]
    fn perfect_toy() {
        let train = toy(120, 1);
        let test = toy(100, 0);
        let model = MarkovModel::estimate(StateSpace::full(3).unwrap(), &train).unwrap();
        let spec = EvalSpec::new("markov", 3, 10, &test).trained_on(&train);
        let r = evaluate(&spec, &model).unwrap();
        assert_eq!(r.n_positions, 100 - 10 - 2);
        assert!(r.success_rate.iter().all(|&s| s == 1.0));
        assert!(r.brier.iter().all(|&b| b == 0.0));
        assert_eq!(r.to_csv().lines().next().unwrap(), "T,success_rate,n_positions,brier,log_loss");
    }

    #[test]
    fn csv_roundtrip() {
        let r = report("x", vec![0.5, 0.7, 1.0]);
        let back = EvalReport::from_csv("x", "r.csv", &r.to_csv()).unwrap();
        assert_eq!(back.success_rate, r.success_rate);
        assert_eq!(back.correct, vec![5, 7, 10]);
        assert!(EvalReport::from_csv("x", "r.csv", "T,foo\n1,2\n").is_err());
        let err = EvalReport::from_csv(
            "x",
            "r.csv",
            "T,success_rate,n_positions,brier,log_loss\n1,0.5,10,0,0\n3,0.5,10,0,0\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn same_trace_needs_opt_in() {
        let train = toy(60, 1);
        let model = MarkovModel::estimate(StateSpace::full(3).unwrap(), &train).unwrap();
        let mut spec = EvalSpec::new("m", 3, 5, &train).trained_on(&train);
        assert!(evaluate(&spec, &model).is_err());
        spec.allow_same_trace = true;
        assert!(evaluate(&spec, &model).is_ok());
    }

    #[test]
    fn rejects_short_test_trace() {
        let train = toy(60, 1);
        let test = toy(10, 0);
        let model = MarkovModel::estimate(StateSpace::full(3).unwrap(), &train).unwrap();
        let spec = EvalSpec::new("m", 3, 8, &test);
        assert!(matches!(evaluate(&spec, &model), Err(Error::TraceTooShort { .. })));
    }

    #[test]
    fn stride_thins_positions() {
        let test = toy(100, 0);
        let spec = EvalSpec::new("m", 3, 10, &test).with_stride(4);
        let pos = spec.positions().unwrap();
        assert_eq!(pos[0], 2);
        assert!(pos.windows(2).all(|w| w[1] - w[0] == 4));
    }

    #[test]
    fn mlp_horizon_is_bounded() {
        let cfg = crate::mlp::MlpConfig {
            input_size: 3,
            output_size: 4,
            hidden_sizes: vec![4],
            ..Default::default()
        };
        let m = MlpModel::init(&cfg).unwrap();
        let test = toy(40, 0);
        let spec = EvalSpec::new("nn", 3, 5, &test);
        assert!(matches!(
            evaluate(&spec, &m),
            Err(Error::HorizonOutOfRange { .. })
        ));
    }

    #[test]
    fn compare_tables() {
        let a = report("a", vec![1.0, 0.5]);
        assert_eq!(compare_csv(&[a.clone()]).unwrap(), "T,a\n1,1\n2,0.5\n");
        let two = compare_csv(&[a.clone(), report("b", vec![1.0, 0.5])]).unwrap();
        for line in two.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[1], cols[2]);
        }
        assert!(compare_csv(&[a.clone(), report("c", vec![1.0])]).is_err());
        assert!(compare_csv(&[]).is_err());
    }

    #[test]
    fn svg_is_self_contained() {
        let svg = compare_svg(
            &[report("x<y", vec![1.0, 0.2, 0.7]), report("z", vec![0.0, 0.5, 1.0])],
            "A & B",
        )
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("x&lt;y"));
        assert!(svg.contains("A &amp; B"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn sweep_reports_table_sizes() {
        let train = toy(200, 1);
        let test = toy(150, 0);
        let spec = SweepSpec {
            train: &train,
            test: &test,
            order: 3,
            sensing: 3,
            max_horizon: 8,
            stride: 1,
        };
        let rows = sweep_l(&spec, &[None, Some(4)]).unwrap();
        assert_eq!(rows[0].states, 6);
        assert_eq!(rows[0].mean_success, 1.0);
        assert_eq!(rows[1].states, 4);
        assert!(sweep_csv(&rows).starts_with("L,states,mean_success\ninf,6,1\n4,4,"));
    }

    #[test]
    fn repeated_evaluation_is_identical() {
        let train = generate_synthetic(&SyntheticSpec {
            block_size: 4,
            n_slots: 800,
            start_state: 1,
            outlier_rate: 0.05,
            rng_seed: 1,
        })
        .unwrap();
        let test = generate_synthetic(&SyntheticSpec {
            block_size: 4,
            n_slots: 400,
            start_state: 0,
            outlier_rate: 0.05,
            rng_seed: 2,
        })
        .unwrap();
        let model = MarkovModel::estimate(StateSpace::smart(&train, 8, None).unwrap(), &train).unwrap();
        let spec = EvalSpec::new("s", 8, 20, &test).trained_on(&train);
        let a = evaluate(&spec, &model).unwrap();
        let b = evaluate(&spec, &model).unwrap();
        assert_eq!(a, b);
        for (c, r) in a.correct.iter().zip(&a.success_rate) {
            assert_eq!(*c as f64 / a.n_positions as f64, *r);
        }
    }
}
