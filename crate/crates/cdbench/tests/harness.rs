mod common;

use std::f64::consts::PI;

use cdbench::harness::emit::{csv_string, json_string, svg_string, CSV_HEADER};
use cdbench::harness::scenario::ToleranceOverride;
use cdbench::harness::*;
use cdbench::inequalities::{CheckReport, Diagnostics, Statement, Tolerance, Witness};
use cdbench::model_space::{SpaceSpec, Stencil};
use cdbench::BenchError;
use common::*;
use proptest::prelude::*;

fn sampler(seed: u64, count: usize, band: usize) -> SamplerSpec {
    SamplerSpec { seed, count, band, transform: Transform::Raw, jets: 0 }
}

/// circle-flat with short grids, for tests that only need some reports.
fn small_circle() -> Scenario {
    let mut scn = Scenario::bundled("circle-flat").unwrap();
    scn.sampler.as_mut().unwrap().count = 3;
    for c in &mut scn.checks {
        c.t = vec![0.1, 0.5];
    }
    scn
}

#[test]
fn sampler_is_deterministic() {
    let cache = ou400();
    let spec = SamplerSpec { jets: 2, ..sampler(42, 4, 6) };
    let a = raw_functions(&cache, &spec, 3.0).unwrap();
    let b = raw_functions(&cache, &spec, 3.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    assert!(a.iter().all(|s| (sup(&s.values) - 1.0).abs() < 1e-15));
    let other = raw_functions(&cache, &sampler(43, 4, 6), 3.0).unwrap();
    assert_ne!(a[0].values, other[0].values);
}

#[test]
fn draws_do_not_depend_on_count() {
    let cache = circle_fourier();
    let few = raw_functions(&cache, &sampler(9, 2, 5), 1.0).unwrap();
    let many = raw_functions(&cache, &sampler(9, 7, 5), 1.0).unwrap();
    assert_eq!(few[..], many[..2]);
}

#[test]
fn band_five_circle_draws_are_low_degree_trig_polynomials() {
    let cache = circle_fourier();
    let space = &cache.gen.space;
    let n = space.len();
    for s in raw_functions(&cache, &sampler(5, 20, 5), 1.0).unwrap() {
        for k in 6..=n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for j in 0..n {
                let th = space.x(j);
                re += s.values[j] * (k as f64 * th).cos();
                im += s.values[j] * (k as f64 * th).sin();
            }
            let mag = (re * re + im * im).sqrt() / n as f64;
            assert!(mag <= 1e-10, "{}: degree {k} coefficient {mag:e}", s.id);
        }
    }
}

#[test]
fn transforms_meet_their_contracts() {
    let cache = ou400();
    let space = &cache.gen.space;
    let raw = raw_functions(&cache, &SamplerSpec { jets: 2, ..sampler(1, 5, 4) }, 3.0).unwrap();
    for s in apply_transform(space, &raw, Transform::NormalizedDensity).unwrap() {
        let m = space.integrate(&(&s.values * &s.values));
        assert!((m - 1.0).abs() <= 1e-12, "{}: mu(g^2) = {m}", s.id);
        assert!(s.values.iter().all(|&v| v > 0.0));
    }
    for s in apply_transform(space, &raw, Transform::PositiveExp).unwrap() {
        assert!(s.values.iter().all(|&v| (-1.0f64).exp() - 1e-15 <= v && v <= 1.0f64.exp() + 1e-15));
    }
    for s in apply_transform(space, &raw, Transform::PositiveFloor { delta: 0.25 }).unwrap() {
        let min = s.values.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 0.25).abs() < 1e-15);
    }
}

#[test]
fn sampler_rejects_bad_specs() {
    let cache = circle_fourier();
    assert!(raw_functions(&cache, &sampler(1, 1, cache.len()), 1.0).is_err());
    assert!(raw_functions(&cache, &sampler(1, 0, 3), 1.0).is_err());
    assert!(raw_functions(&cache, &sampler(1, 1, 0), 1.0).is_err());
    let floor = SamplerSpec { transform: Transform::PositiveFloor { delta: 0.0 }, ..sampler(1, 1, 1) };
    assert!(floor.validate().is_err());
}

#[test]
fn interval_jets_sit_where_curvature_is_smallest() {
    // For OU with n = 3 the pointwise bound 1 − x²/2 is smallest at the ends.
    let cache = ou400();
    let raw = raw_functions(&cache, &SamplerSpec { jets: 8, ..sampler(3, 1, 1) }, 3.0).unwrap();
    for s in &raw[1..] {
        let x0: f64 = s.id.trim_start_matches(|c| c != '=').trim_matches(|c| c == '=' || c == ')').parse().unwrap();
        assert!(x0.abs() > 0.9, "{}", s.id);
    }
}

#[test]
fn empty_check_list_gives_empty_report_set() {
    let mut scn = Scenario::bundled("circle-flat").unwrap();
    scn.checks.clear();
    let rs = run_scenario(&scn, &RunOptions::default()).unwrap();
    assert!(rs.reports.is_empty());
    let s = &rs.summary;
    assert_eq!((s.total, s.passed, s.failed, s.degraded), (0, 0, 0, 0));
    assert!(s.statements.is_empty() && s.ok && !s.falsified);
    assert_eq!(csv_string(&rs), format!("{CSV_HEADER}\n"));
    assert_eq!(planned_reports(&scn).unwrap(), 0);
}

#[test]
fn json_round_trip_is_bitwise() {
    let rs = run_scenario(&small_circle(), &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_reports(&rs, Format::Json, &path).unwrap();
    let (lines, summary) = read_json(&path).unwrap();
    assert_eq!(lines.len(), rs.reports.len());
    for (line, e) in lines.iter().zip(&rs.reports) {
        assert_eq!(line.check, e.check);
        for (a, b) in [(line.report.margin, e.report.margin), (line.report.lhs, e.report.lhs), (line.report.rhs, e.report.rhs)] {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(line.report, e.report);
    }
    assert_eq!(summary.summary, rs.summary);
    assert_eq!(summary.resolved, rs.resolved);
    assert_eq!(summary.scenario, rs.scenario);
}

#[test]
fn json_numbers_carry_seventeen_significant_digits() {
    let rs = run_scenario(&small_circle(), &RunOptions::default()).unwrap();
    let text = json_string(&rs);
    let first = text.lines().next().unwrap();
    let v: serde_json::Value = serde_json::from_str(first).unwrap();
    assert_eq!(v["schema"], "cdbench-report-v1");
    assert_eq!(v["kind"], "report");
    let margin = first.split("\"margin\":").nth(1).unwrap().split(',').next().unwrap();
    let mantissa = margin.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{margin}");
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["kind"], "summary");
}

#[test]
fn infinite_dimension_round_trips() {
    let mut scn = small_circle();
    scn.curvature.n = f64::INFINITY;
    scn.checks.retain(|c| c.statement == Statement::VarianceUpper);
    let rs = run_scenario(&scn, &RunOptions::default()).unwrap();
    let text = json_string(&rs);
    assert!(text.contains("\"n\":\"inf\""));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_reports(&rs, Format::Json, &path).unwrap();
    let (lines, summary) = read_json(&path).unwrap();
    assert!(lines.iter().all(|l| l.report.witness.n == f64::INFINITY));
    assert_eq!(summary.resolved.n, f64::INFINITY);
    let toml = toml::to_string(&scn).unwrap();
    assert_eq!(Scenario::from_toml(&toml).unwrap(), scn);
}

#[test]
fn csv_rows_match_planned_count() {
    let scn = Scenario::bundled("circle-flat").unwrap();
    let planned = planned_reports(&scn).unwrap();
    assert_eq!(planned, 4 * 4 * 20 + 4 * 3 * 20);
    let rs = run_scenario(&scn, &RunOptions::default()).unwrap();
    let csv = csv_string(&rs);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), planned);
    assert_eq!(rs.reports.len(), planned);
}

#[test]
fn csv_witness_column_is_quoted() {
    let rs = run_scenario(&small_circle(), &RunOptions::default()).unwrap();
    let csv = csv_string(&rs);
    let row = csv.lines().nth(1).unwrap();
    assert_eq!(row.matches(',').count(), 7, "{row}");
    assert!(row.contains("\"f=band#0;t=0.1;"), "{row}");
}

#[test]
fn summary_matches_reports() {
    let rs = run_scenario(&small_circle(), &RunOptions::default()).unwrap();
    let s = &rs.summary;
    assert_eq!(s.total, rs.reports.len());
    assert_eq!(s.passed + s.failed, s.total);
    assert_eq!(s.statements.values().map(|st| st.count).sum::<usize>(), s.total);
    for (name, st) in &s.statements {
        let margins: Vec<f64> =
            rs.reports.iter().filter(|e| e.report.statement.as_str() == name).map(|e| e.report.margin).collect();
        let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(st.worst_margin, min);
        assert_eq!(rs.reports[st.worst_index].report.margin, min);
    }
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let scn = small_circle();
    let one = run_scenario(&scn, &RunOptions { jobs: Some(1), ..RunOptions::default() }).unwrap();
    let many = run_scenario(&scn, &RunOptions { jobs: Some(4), ..RunOptions::default() }).unwrap();
    assert_eq!(json_string(&one), json_string(&many));
    assert_eq!(csv_string(&one), csv_string(&many));
}

#[test]
fn cache_directory_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { cache_dir: Some(dir.path().to_path_buf()), ..RunOptions::default() };
    let scn = small_circle();
    let first = run_scenario(&scn, &opts).unwrap();
    let second = run_scenario(&scn, &opts).unwrap();
    assert!(!first.timing.cache_hit && second.timing.cache_hit);
    assert_eq!(json_string(&first), json_string(&second));
}

#[test]
fn svg_has_one_panel_per_statement() {
    let rs = run_scenario(&small_circle(), &RunOptions::default()).unwrap();
    let svg = svg_string(&rs);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    for name in rs.summary.statements.keys() {
        assert!(svg.contains(&format!(">{name}: ")), "{name}");
    }
    assert_eq!(svg.matches("<circle").count(), rs.reports.len());
}

#[test]
fn emit_all_writes_every_format() {
    let rs = run_scenario(&small_circle(), &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_all(&rs, dir.path(), &[Format::Json, Format::Csv, Format::Svg]).unwrap();
    assert_eq!(paths.len(), 3);
    assert!(paths.iter().all(|p| p.exists()));
    assert!(dir.path().join("timing.json").exists());
    let json = std::fs::read_to_string(dir.path().join("reports.json")).unwrap();
    assert!(!json.contains("build_secs"));
}

#[test]
fn node_cap_fails_before_building() {
    let mut scn = Scenario::bundled("circle-flat").unwrap();
    scn.space = SpaceSpec::circle(MAX_DENSE_NODES + 1);
    let start = std::time::Instant::now();
    let err = run_scenario(&scn, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, BenchError::NodeCap { requested, cap } if requested == MAX_DENSE_NODES + 1 && cap == MAX_DENSE_NODES));
    assert!(start.elapsed().as_secs_f64() < 1.0);
    scn.space = SpaceSpec::sphere(5).normalized();
    assert!(matches!(scn.validate(), Err(BenchError::NodeCap { requested: 10242, .. })));
}

#[test]
fn support_cap_fails_before_building() {
    let mut scn = Scenario::bundled("transport-sphere").unwrap();
    scn.space = SpaceSpec::sphere(3).normalized();
    assert!(matches!(scn.validate(), Err(BenchError::SupportCap { size: 642, cap: 400 })));
    scn.transport.subsample = true;
    scn.validate().unwrap();
}

#[test]
fn bundled_scenarios_parse_and_validate() {
    assert_eq!(BUNDLED.len(), 5);
    for (name, _) in BUNDLED {
        let scn = Scenario::bundled(name).unwrap();
        assert_eq!(scn.name, name);
        scn.validate().unwrap();
        assert!(planned_reports(&scn).unwrap() > 0, "{name}");
        let back = Scenario::from_toml(&toml::to_string(&scn).unwrap()).unwrap();
        assert_eq!(back, scn, "{name}");
    }
    assert!(Scenario::bundled("sphere-falsify").unwrap().falsification);
    assert!(Scenario::bundled("nope").is_err());
}

#[test]
fn load_resolves_bundled_names() {
    let scn = Scenario::load(std::path::Path::new("interval-ou")).unwrap();
    assert_eq!(scn.name, "interval-ou");
    assert!(Scenario::load(std::path::Path::new("/nonexistent/x.toml")).is_err());
}

fn invalid(text: &str) -> String {
    match Scenario::from_toml(text).and_then(|s| s.validate().map(|_| s)) {
        Ok(_) => panic!("accepted:\n{text}"),
        Err(e) => e.to_string(),
    }
}

const HEAD: &str = r#"
name = "x"
[space]
kind = "circle"
nodes = 64
normalize_measure = true
[curvature]
mode = "analytic"
n = 1
[sampler]
seed = 1
count = 2
band = 3
"#;

#[test]
fn validation_rejects_malformed_scenarios() {
    let cases = [
        ("[[checks]]\nstatement = \"gradient_integral\"\n", "required"),
        ("[[checks]]\nstatement = \"gradient_integral\"\nt = [0.1]\ns = [0.1]\n", "does not apply"),
        ("[[checks]]\nstatement = \"nonsense\"\nt = [0.1]\n", "unknown variant"),
        ("[[checks]]\nstatement = \"variance_upper\"\nt = [-0.1]\n", "nonnegative"),
        ("[[checks]]\nstatement = \"log_harnack\"\nt = [0.1]\npairs = [{ x = 0, y = 3 }]\ntransform = \"raw\"\n", "positive"),
        ("[[checks]]\nstatement = \"hw0\"\ntransform = \"positive_exp\"\n", "normalized_density"),
        ("[[checks]]\nstatement = \"h1\"\nt = [0.0]\ns = [0.1]\npairs = [{ x = 0, y = 3 }]\n", "t > 0"),
        ("[[checks]]\nstatement = \"heat_lower\"\nt = [0.1]\n", "theta"),
        ("[[checks]]\nstatement = \"heat_lower\"\nt = [0.1]\ntheta = [0.5]\n", "normalised sphere"),
        ("[[checks]]\nstatement = \"lichnerowicz\"\ntransform = \"raw\"\n", "sampled functions"),
        ("[tolerance.statements.bogus]\nabs = 1.0\n", "unknown statement"),
        ("[tolerance]\nmesh_c = -1.0\n", "negative"),
        ("extra = 1\n", "unknown field"),
    ];
    for (tail, needle) in cases {
        let msg = invalid(&format!("{HEAD}{tail}"));
        assert!(msg.contains(needle), "{tail:?}: {msg}");
    }
    let no_sampler = HEAD.split("[sampler]").next().unwrap();
    assert!(invalid(&format!("{no_sampler}[[checks]]\nstatement = \"variance_upper\"\nt = [0.1]\n")).contains("sampler"));
    let explicit = HEAD.replace("mode = \"analytic\"", "mode = \"explicit\"");
    assert!(invalid(&explicit).contains("needs `k`"));
    let analytic_k = HEAD.replace("n = 1", "n = 1\nk = 0.0");
    assert!(invalid(&analytic_k).contains("explicit mode"));
}

#[test]
fn contraction_on_harmonic_stencil_is_rejected() {
    let mut scn = Scenario::bundled("transport-sphere").unwrap();
    scn.space = scn.space.with_stencil(Stencil::Harmonic { lmax: 4 });
    assert!(scn.validate().unwrap_err().to_string().contains("positivity"));
}

#[test]
fn tolerance_precedence() {
    let h = 0.1;
    let mut spec = ToleranceSpec::default();
    let t = spec.resolve(Statement::Hwi, h, 1.0);
    assert!((t.abs - 0.01 * h * h).abs() < 1e-18 && t.rel == 0.0);
    spec.mesh_c = Some(2.0);
    assert!((spec.resolve(Statement::Hwi, h, 1.0).abs - 0.02).abs() < 1e-15);
    spec.abs = Some(1e-6);
    spec.rel = Some(0.1);
    let t = spec.resolve(Statement::Hwi, h, 3.0);
    assert!((t.abs - 3e-6).abs() < 1e-18 && (t.rel - 0.3).abs() < 1e-15);
    spec.statements.insert("hwi".into(), ToleranceOverride { mesh_c: Some(1.0), abs: None, rel: Some(0.0) });
    let t = spec.resolve(Statement::Hwi, h, 1.0);
    assert!((t.abs - 0.01).abs() < 1e-15 && t.rel == 0.0);
    assert_eq!(spec.resolve(Statement::Hw0, h, 1.0).abs, 1e-6);
    spec.statements.insert("hwi".into(), ToleranceOverride { mesh_c: Some(1.0), abs: Some(5.0), rel: None });
    let t = spec.resolve(Statement::Hwi, h, 1.0);
    assert_eq!((t.abs, t.rel), (5.0, 0.1));
}

#[test]
fn tol_scale_multiplies_every_tolerance() {
    let scn = small_circle();
    let base = run_scenario(&scn, &RunOptions::default()).unwrap();
    let scaled = run_scenario(&scn, &RunOptions { tol_scale: 10.0, ..RunOptions::default() }).unwrap();
    for (a, b) in base.reports.iter().zip(&scaled.reports) {
        assert!((b.report.tol - 10.0 * a.report.tol).abs() <= 1e-15 * b.report.tol);
        assert_eq!(a.report.margin, b.report.margin);
    }
    assert!(run_scenario(&scn, &RunOptions { tol_scale: 0.0, ..RunOptions::default() }).is_err());
}

#[test]
fn only_filter_restricts_statements() {
    let opts = RunOptions { only: Some(vec![Statement::VarianceLower]), ..RunOptions::default() };
    let rs = run_scenario(&small_circle(), &opts).unwrap();
    assert!(!rs.reports.is_empty());
    assert!(rs.reports.iter().all(|e| e.report.statement == Statement::VarianceLower));
}

#[test]
fn falsification_runs_are_ok_despite_failures() {
    let mut scn = small_circle();
    scn.checks.retain(|c| c.statement == Statement::GradientIntegral);
    scn.curvature.shift = -0.5;
    scn.falsification = true;
    let rs = run_scenario(&scn, &RunOptions::default()).unwrap();
    assert!(rs.summary.failed > 0 && rs.summary.falsified && rs.summary.ok);
    assert_eq!(rs.resolved.k, -0.5);
    assert!(csv_string(&rs).contains("expected_fail"));
    scn.falsification = false;
    assert!(!run_scenario(&scn, &RunOptions::default()).unwrap().summary.ok);
}

#[test]
fn estimated_curvature_mode_runs() {
    let mut scn = Scenario::bundled("interval-ou").unwrap();
    scn.curvature.mode = CurvatureMode::Estimated;
    scn.sampler.as_mut().unwrap().count = 2;
    scn.checks.retain(|c| c.statement == Statement::VarianceUpper);
    let rs = run_scenario(&scn, &RunOptions::default()).unwrap();
    let (k, exact) = (rs.resolved.k, rs.resolved.analytic_k.unwrap());
    // Jets sit near the ends, where the pointwise bound is sharp.
    assert!(k <= exact + 1e-3 && k > exact - 0.05, "estimated {k}, analytic {exact}");
    assert!(rs.summary.ok);
}

#[test]
fn construction_errors_name_the_stage() {
    let mut scn = small_circle();
    scn.sampler.as_mut().unwrap().band = 10_000;
    match run_scenario(&scn, &RunOptions::default()).unwrap_err() {
        BenchError::Scenario { stage, .. } => assert_eq!(stage, "sampler"),
        e => panic!("{e}"),
    }
    let mut scn = small_circle();
    scn.checks[4].pairs = vec![PairSpec::Distance { distance: 4.0 }];
    match run_scenario(&scn, &RunOptions::default()).unwrap_err() {
        BenchError::Scenario { stage, .. } => assert_eq!(stage, "grid"),
        e => panic!("{e}"),
    }
}

#[test]
fn distance_pairs_resolve_near_the_request() {
    let cache = sphere_harmonic3();
    let space = &cache.gen.space;
    for d in [0.3, PI / 2.0, 2.5] {
        let (x, y) = resolve_pair(space, &PairSpec::Distance { distance: d }).unwrap();
        let got = cdbench::model_space::sphere_distance(space.coords[x], space.coords[y]);
        assert!((got - d).abs() < 2.0 * space.h, "{d} -> {got}");
    }
    assert!(resolve_pair(space, &PairSpec::Nodes { x: 0, y: space.len() }).is_err());
}

fn report(statement: Statement, lhs: f64, rhs: f64) -> CheckReport {
    CheckReport::new(statement, lhs, rhs, &Tolerance::absolute(1e-3, "t"), Witness::default(), Diagnostics::default())
        .unwrap()
}

proptest! {
    #[test]
    fn summary_tallies_agree(items in prop::collection::vec((0usize..4, -1.0f64..1.0, -1.0f64..1.0), 0..60), fals: bool) {
        let statements = [Statement::Hwi, Statement::H1, Statement::VarianceUpper, Statement::Lichnerowicz];
        let reports: Vec<ReportEntry> = items
            .iter()
            .map(|&(s, l, r)| ReportEntry { check: s, report: report(statements[s], l, r) })
            .collect();
        let sum = Summary::from_reports(&reports, fals);
        prop_assert_eq!(sum.total, reports.len());
        prop_assert_eq!(sum.passed, reports.iter().filter(|e| e.report.pass).count());
        prop_assert_eq!(sum.passed + sum.failed, sum.total);
        prop_assert_eq!(sum.ok, fals || sum.failed == 0);
        prop_assert_eq!(
            sum.falsified,
            reports.iter().any(|e| !e.report.pass && e.report.statement == Statement::VarianceUpper)
        );
        for (name, st) in &sum.statements {
            let min = reports
                .iter()
                .filter(|e| e.report.statement.as_str() == name)
                .map(|e| e.report.margin)
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(st.worst_margin, min);
            prop_assert_eq!(reports[st.worst_index].report.margin, min);
            prop_assert_eq!(st.passed + st.failed, st.count);
        }
    }

    #[test]
    fn positive_floor_hits_delta(seed in 0u64..1000, delta in 1e-6f64..10.0) {
        let cache = circle_fourier();
        let raw = raw_functions(&cache, &sampler(seed, 1, 4), 1.0).unwrap();
        let out = apply_transform(&cache.gen.space, &raw, Transform::PositiveFloor { delta }).unwrap();
        let min = out[0].values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((min - delta).abs() <= 1e-14 * delta.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn planned_count_matches_run(ts in prop::collection::vec(0.01f64..1.0, 1..3), count in 1usize..3) {
        let mut scn = small_circle();
        scn.sampler.as_mut().unwrap().count = count;
        for c in &mut scn.checks {
            c.t = ts.clone();
        }
        let rs = run_scenario(&scn, &RunOptions::default()).unwrap();
        prop_assert_eq!(rs.reports.len(), planned_reports(&scn).unwrap());
    }
}
