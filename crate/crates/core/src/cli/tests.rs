use super::*;

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("kornlab").chain(args.iter().copied())).unwrap()
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("korn.json");
    fs::write(&cfg, r#"{"domain": "disk", "refine": 2, "bc": "dirichlet"}"#).unwrap();
    let Command::Korn(a) = parse(&["korn", "--config", cfg.to_str().unwrap(), "--refine", "3"]).command else {
        panic!()
    };
    let c = a.resolve().unwrap();
    assert_eq!(c.domain, "disk");
    assert_eq!(c.refine, 3);
    assert_eq!(c.bc, BoundaryCondition::Dirichlet);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.json");
    fs::write(&cfg, r#"{"n": 64, "grid_size": 64}"#).unwrap();
    let Command::Rigidity(a) = parse(&["rigidity", "--config", cfg.to_str().unwrap()]).command else {
        panic!()
    };
    let e = a.resolve().unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("grid_size"), "{e}");
}

#[test]
fn bad_enum_names_are_validation_errors() {
    let Command::Korn(a) = parse(&["korn", "--bc", "slip"]).command else { panic!() };
    assert_eq!(a.resolve().unwrap_err().exit_code(), 2);
    let Command::Korn(a) = parse(&["korn", "--domain", "torus"]).command else { panic!() };
    assert_eq!(a.resolve().unwrap_err().exit_code(), 2);
}

#[test]
fn h_list_parsing() {
    assert_eq!(parse_h_list("0.1, 0.05,0.025").unwrap(), vec![0.1, 0.05, 0.025]);
    assert!(parse_h_list("0.1,x").is_err());
}

#[test]
fn shell_profile_accepts_expression_and_json() {
    let Command::Shell(a) = parse(&["shell", "--profile", "0.2+0.05*cos(3t)"]).command else { panic!() };
    let expr = a.resolve().unwrap().profile;
    let json = serde_json::to_string(&expr).unwrap();
    let Command::Shell(b) = parse(&["shell", "--profile", &json]).command else { panic!() };
    assert_eq!(b.resolve().unwrap().profile, expr);
}

#[test]
fn error_classes_map_to_exit_codes() {
    assert_eq!(CliError::from(KornError::InfiniteQuotient).exit_code(), 3);
    assert_eq!(CliError::from(RigidityError::ZeroDistance { rhs: 0.0 }).exit_code(), 3);
    assert_eq!(CliError::from(ShellError::InfiniteQuotient).exit_code(), 3);
    assert_eq!(CliError::from(KornError::SingularB { detail: String::new() }).exit_code(), 4);
    assert_eq!(CliError::from(MeshError::Empty).exit_code(), 2);
    assert_eq!(CliError::SelftestFailed { failed: 1 }.exit_code(), 4);
}

#[test]
fn rigidity_reports_prescribed_angle() {
    let c = RigidityConfig {
        n: 128,
        r0: 1.0472,
        ..RigidityConfig::default()
    };
    let r = cmd_rigidity(&c).unwrap();
    assert!((r.optimal_theta - 1.0472).abs() < 1e-6);
    assert!((r.ratio - 1.0).abs() < 1e-3);
}

#[test]
fn selftest_is_deterministic_and_detects_the_wrong_constant() {
    let c = SelftestConfig {
        samples: 2000,
        ..SelftestConfig::default()
    };
    let a = run_selftest(&c);
    let b = run_selftest(&c);
    assert_eq!(a, b);
    assert!(a.iter().all(|c| c.pass), "{:#?}", a.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    let broken = run_selftest(&SelftestConfig {
        break_det_constant: true,
        ..c
    });
    let failing: Vec<_> = broken.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    assert_eq!(failing, ["det_identity"]);
}
