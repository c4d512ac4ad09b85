//! One runner per experiment; each writes its artifacts through [`Output`].

use std::time::Instant;

use geqhom_core::conditions::{
    check_gammaexp, check_lemma51, check_moment3, check_sublinear, check_taubound, check_volume_bound,
    stream_growth_integral, ConditionReport,
};
use geqhom_core::gequation::{homogenization_error, solve_effective, solve_geq, ueps_rep, RepOptions};
use geqhom_core::homogenize::{build_wulff, seed_list, shape_diagnostics, support, unit_directions, GridPolicy, WulffSet};
use geqhom_core::traveltime::DOMAIN_FACTOR;
use geqhom_core::{
    descend_path, field_stats, integrate, sample_field, solve_travel_time, ControlSignal, DriftSign, Grid2,
};

use crate::acceptance::{run_suite, CriterionResult};
use crate::config::{Experiment, ExperimentConfig, GeqMethod, SquareSpec};
use crate::error::CliError;
use crate::output::{JobTiming, Output};

/// Runs experiments and records per-job timings.
pub struct Runner<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: Output,
    pub timings: Vec<JobTiming>,
    /// Called with every finished acceptance criterion.
    pub on_criterion: Box<dyn FnMut(&CriterionResult) + 'a>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, out: Output) -> Runner<'a> {
        Runner { cfg, out, timings: Vec::new(), on_criterion: Box::new(|_| {}) }
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let r = f(self);
        self.timings.push(JobTiming { name: name.to_string(), seconds: start.elapsed().as_secs_f64() });
        r
    }

    pub fn run(&mut self, exp: Experiment) -> Result<(), CliError> {
        match exp {
            Experiment::Field => self.field(),
            Experiment::Trajectory => self.trajectory(),
            Experiment::Tau => self.tau(),
            Experiment::Wulff => self.wulff(),
            Experiment::Geq => self.geq(),
            Experiment::Conditions => self.conditions(),
            Experiment::Acceptance => self.acceptance(),
        }
    }

    fn policy(&self) -> GridPolicy {
        GridPolicy { h: self.cfg.solver.h, stencil: self.cfg.solver.stencil, pad: self.cfg.solver.pad }
    }

    fn square(spec: &SquareSpec, stencil: u8) -> Result<Grid2, CliError> {
        Ok(Grid2::covering(spec.center, spec.half_width, spec.h, stencil)?)
    }

    fn field(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let stats = self.timed("field-stats", |_| Ok(field_stats(&cfg.field, cfg.sampling.samples, cfg.seed)?))?;
        self.out.json("field_stats.json", &stats)?;
        if let Some(spec) = &cfg.sampling.grid {
            let grid = Self::square(spec, 1)?;
            let f = sample_field(&cfg.field, cfg.seed)?;
            let rows = (0..grid.len()).map(|k| {
                let x = grid.position(k);
                let v = f.velocity(x);
                vec![x.x, x.y, f.psi(x), v.x, v.y]
            });
            self.out.csv("field.csv", &["x1", "x2", "psi", "v1", "v2"], rows)?;
        }
        Ok(())
    }

    fn trajectory(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let job = &cfg.trajectory;
        let f = sample_field(&cfg.field, cfg.seed)?;
        let traj = if let Some(target) = job.target {
            let reach = DOMAIN_FACTOR * (f.velocity_bound() + 1.0) * job.x0.distance(target) + cfg.solver.pad;
            let grid = Grid2::covering(job.x0, reach, cfg.solver.h, cfg.solver.stencil)?;
            let report = self.timed("descend", |_| {
                let tau = solve_travel_time(&f, &[job.x0], &grid, job.drift, job.bound)?;
                Ok(descend_path(&tau, &f, target)?)
            })?;
            self.out.json(
                "path.json",
                &serde_json::json!({
                    "source": job.x0,
                    "target": target,
                    "tau": report.tau,
                    "traversal_time": report.traversal_time,
                    "slack": report.slack,
                }),
            )?;
            report.trajectory
        } else {
            let control = ControlSignal::uniform(job.control_dt, job.controls.clone(), job.bound)?;
            self.timed("integrate", |_| Ok(integrate(&f, job.x0, &control, job.t_end, job.dt, job.drift)?))?
        };
        let rows = traj.times.iter().zip(&traj.positions).map(|(t, x)| {
            let a = traj.control.at(*t);
            vec![*t, x.x, x.y, a.x, a.y]
        });
        self.out.csv("trajectory.csv", &["t", "x1", "x2", "alpha1", "alpha2"], rows)
    }

    fn tau(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let job = &cfg.tau;
        let f = sample_field(&cfg.field, cfg.seed)?;
        let far = job.targets.iter().map(|y| y.distance(job.source)).fold(0.0, f64::max);
        let half = job
            .half_width
            .unwrap_or(DOMAIN_FACTOR * (f.velocity_bound() + 1.0) * far + cfg.solver.pad);
        let grid = Grid2::covering(job.source, half, cfg.solver.h, cfg.solver.stencil)?;
        let t = self.timed("tau", |_| Ok(solve_travel_time(&f, &[job.source], &grid, DriftSign::Minus, 1.0)?))?;
        let mut values = Vec::new();
        for y in &job.targets {
            let v = t.value_nearest(*y)?;
            values.push(serde_json::json!({ "target": y, "tau": v, "reachable": v.is_finite() }));
        }
        self.out.json(
            "tau.json",
            &serde_json::json!({
                "source": job.source,
                "grid": grid,
                "complete": t.is_complete(),
                "targets": values,
            }),
        )?;
        if job.write_field {
            let rows = (0..grid.len()).map(|k| {
                let x = grid.position(k);
                vec![x.x, x.y, t.values()[k]]
            });
            self.out.csv("tau_field.csv", &["x1", "x2", "tau"], rows)?;
        }
        Ok(())
    }

    fn build_wulff(&mut self) -> Result<WulffSet, CliError> {
        let cfg = self.cfg;
        let policy = self.policy();
        self.timed("wulff", |_| {
            Ok(build_wulff(&cfg.field, &seed_list(cfg.seed, cfg.wulff.seeds), cfg.wulff.directions, &cfg.wulff.radii, &policy)?)
        })
    }

    fn wulff(&mut self) -> Result<(), CliError> {
        let w = self.build_wulff()?;
        let h = w.clone().hamiltonian();
        let hbar: Vec<f64> = unit_directions(64).into_iter().map(|p| support(&h, p)).collect();
        let mut doc = serde_json::to_value(&w).map_err(|e| CliError::Config(e.to_string()))?;
        doc["Hbar_on_unit_circle"] = hbar.into();
        let rows = (0..w.directions.len()).map(|j| {
            let p = w.directions[j];
            vec![p.y.atan2(p.x), p.x, p.y, w.qbar[j], w.qbar_std_err[j], w.raw_radii[j], w.radii[j]]
        });
        self.out.csv("wulff.csv", &["angle", "p1", "p2", "qbar", "qbar_std_err", "raw_radius", "radius"], rows)?;
        if let Some(p) = self.cfg.wulff.diagnostics {
            let cfg = self.cfg;
            let policy = self.policy();
            let d = self.timed("shape-diagnostics", |_| {
                let seeds = seed_list(cfg.seed, cfg.wulff.diagnostic_seeds);
                Ok(shape_diagnostics(&cfg.field, &seeds, p, &cfg.wulff.radii, &policy)?)
            })?;
            doc["diagnostics"] = serde_json::to_value(&d).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.out.json("wulff.json", &doc)
    }

    fn geq(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let job = &cfg.geq;
        let f = sample_field(&cfg.field, cfg.seed)?;
        let eval = Self::square(&job.eval, 1)?;
        let mut columns = vec!["t", "x1", "x2"];
        let mut solutions = Vec::new();
        for m in &job.methods {
            let values = match m {
                GeqMethod::LaxFriedrichs => {
                    let domain = Grid2::covering(job.eval.center, job.domain_half_width, cfg.solver.h, 1)?;
                    columns.push("u_lax_friedrichs");
                    let snaps = self.timed("lax-friedrichs", |_| {
                        Ok(solve_geq(&f, job.eps, &job.u0, &job.times, &domain, cfg.solver.cfl, cfg.solver.sigma)?)
                    })?;
                    snaps.iter().map(|s| (0..eval.len()).map(|k| s.interp(eval.position(k))).collect::<Vec<_>>()).collect()
                }
                GeqMethod::Control => {
                    columns.push("u_control");
                    let opts = RepOptions { h: job.rep_h, stencil: cfg.solver.stencil };
                    let snaps = self.timed("control", |_| Ok(ueps_rep(&f, job.eps, &job.u0, &job.times, &eval, &opts)?))?;
                    snaps.into_iter().map(|s| s.values).collect()
                }
                GeqMethod::Effective => {
                    columns.push("u_effective");
                    let w = self.build_wulff()?;
                    let snaps = self.timed("effective", |_| Ok(solve_effective(&w, &job.u0, &job.times, &eval, job.sampling_tol)?))?;
                    snaps.into_iter().map(|s| s.values).collect()
                }
            };
            solutions.push(values);
        }
        let mut rows = Vec::new();
        for (ti, t) in job.times.iter().enumerate() {
            for k in 0..eval.len() {
                let x = eval.position(k);
                let mut row = vec![*t, x.x, x.y];
                row.extend(solutions.iter().map(|s: &Vec<Vec<f64>>| s[ti][k]));
                rows.push(row);
            }
        }
        self.out.csv("geq.csv", &columns, rows)?;
        if let Some(h) = &job.homogenization {
            let rep = self.timed("homogenization", |_| {
                Ok(homogenization_error(&cfg.field, cfg.seed, &job.u0, h.t_end, &h.eps, h.radius, &h.options)?)
            })?;
            self.out.csv("homogenization.csv", &["eps", "error"], rep.eps.iter().zip(&rep.errors).map(|(e, v)| vec![*e, *v]))?;
            self.out.json("homogenization.json", &rep)?;
        }
        Ok(())
    }

    fn condition(&mut self, id: &str) -> Result<ConditionReport, CliError> {
        let cfg = self.cfg;
        let c = &cfg.conditions;
        let spec = &cfg.field;
        let seed = cfg.seed;
        let report = match id {
            "lemma51" => check_lemma51(spec, seed, c.lemma51.z, c.lemma51.m, &c.lemma51.options)?,
            "taubound" => check_taubound(spec, &seed_list(seed, c.taubound.seeds), &c.taubound.radii, &c.taubound.options)?,
            "gammaexp" => check_gammaexp(spec, c.gammaexp.n, seed, c.gammaexp.radius, &c.gammaexp.options)?,
            "stream-growth" => {
                let steps = (c.stream_growth.r_max / c.stream_growth.dr).ceil() as usize;
                let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * c.stream_growth.dr).collect();
                stream_growth_integral(spec, &grid, c.stream_growth.n, seed, &c.stream_growth.options)?
            }
            "moment3" => check_moment3(spec, c.moment3.n, seed, c.moment3.expected, c.moment3.sigmas)?,
            "sublinear" => check_sublinear(spec, seed, &c.sublinear.radii, c.sublinear.step)?,
            "volume" => check_volume_bound(spec, seed, c.volume.x, &c.volume.times, &self.policy(), c.volume.tol)?,
            other => return Err(CliError::Config(format!("unknown condition id `{other}`"))),
        };
        Ok(report)
    }

    /// Runs every selected check. A check that cannot run (for example a
    /// field without a stream function) is recorded in the summary and the
    /// first such error is returned once the rest have finished.
    fn conditions(&mut self) -> Result<(), CliError> {
        let mut summary = Vec::new();
        let mut first_err = None;
        for id in self.cfg.conditions.run.clone() {
            match self.timed(&id, |r| r.condition(&id)) {
                Ok(report) => {
                    self.out.json(&format!("conditions/{id}.json"), &report)?;
                    if !report.table.rows.is_empty() {
                        let cols: Vec<&str> = report.table.columns.iter().map(String::as_str).collect();
                        self.out.csv(&format!("conditions/{id}.csv"), &cols, report.table.rows.clone())?;
                    }
                    summary.push((id, report.passed, report.verdict));
                }
                Err(e @ CliError::Core(_)) => {
                    self.out.json(&format!("conditions/{id}.json"), &serde_json::json!({ "id": id, "error": e.to_string() }))?;
                    summary.push((id, false, format!("error: {e}")));
                    first_err.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        let rows = summary
            .into_iter()
            .map(|(id, passed, verdict)| vec![id, passed.to_string(), format!("\"{}\"", verdict.replace('"', "'"))]);
        self.out.csv_cells("conditions_summary.csv", &["id", "passed", "verdict"], rows)?;
        first_err.map_or(Ok(()), Err)
    }

    fn acceptance(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let job = &cfg.acceptance;
        let start = Instant::now();
        let mut per = Vec::new();
        let summary = {
            let cb = &mut self.on_criterion;
            run_suite(&job.criteria, &job.tolerances, &job.settings, cfg.seed, |c| {
                per.push(JobTiming { name: format!("criterion-{}", c.id), seconds: c.seconds });
                cb(c)
            })
        };
        self.timings.extend(per);
        self.timings.push(JobTiming { name: "acceptance".into(), seconds: start.elapsed().as_secs_f64() });
        self.out.json("acceptance.json", &summary)?;
        let rows = summary.criteria.iter().map(|c| vec![c.id as f64, if c.passed { 1.0 } else { 0.0 }]);
        self.out.csv("acceptance.csv", &["criterion", "passed"], rows)?;
        if summary.passed {
            Ok(())
        } else {
            let red: Vec<String> = summary.criteria.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
            Err(CliError::Acceptance(format!("criteria {} failed", red.join(", "))))
        }
    }
}
