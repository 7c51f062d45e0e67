use std::io::Write;
use std::process::{Command, Output, Stdio};

fn unitsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitsum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn unitsum_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_unitsum"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn expand_json_round_trips_through_verify() {
    let o = unitsum(&["expand", "--p", "5", "--q", "23", "997", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = stdout(&o);
    assert!(doc.starts_with(r#"{"kind":"signed","p":"5","q":"23","value":"997","terms":["#));
    let v = unitsum_stdin(&["verify"], &doc);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout(&v), "value 997, claimed 997: valid\n");
}

#[test]
fn verify_rejects_wrong_value() {
    let doc = r#"{"kind":"signed","p":"5","q":"23","value":"3","terms":[{"d":1,"i":2,"j":0},{"d":-1,"i":0,"j":1}]}"#;
    let v = unitsum_stdin(&["verify", "--format", "json"], doc);
    assert_eq!(v.status.code(), Some(5));
    assert_eq!(
        stdout(&v),
        "{\"value\":\"2\",\"claimed\":\"3\",\"status\":\"invalid\"}\n"
    );
    let bad = unitsum_stdin(&["verify"], "not json");
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = [
        "expand",
        "--p",
        "5",
        "--q",
        "23",
        "123456789",
        "--format",
        "json",
    ];
    assert_eq!(unitsum(&args).stdout, unitsum(&args).stdout);
}

#[test]
fn negative_values_are_accepted() {
    let o = unitsum(&["expand", "--p", "5", "--q", "23", "-2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "-2 = - 5^2 + 23\nweight 2\n");
}

#[test]
fn find_relation_prints_certificate_when_none_exists() {
    let o = unitsum(&["find-relation", "--p", "5", "--q", "11", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        stdout(&o),
        "{\"p\":\"5\",\"q\":\"11\",\"modulus\":5,\"p_orbit\":[0],\"q_orbit\":[1]}\n"
    );
    let o = unitsum(&["find-relation", "--p", "5", "--q", "23"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "2 = 5^2 - 23^1\n");
    let o = unitsum(&["find-relation", "--p", "5", "--q", "11", "--extended"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "2 = 5^-1 * 11^1 - 5^-1\n");
}

#[test]
fn obstruct_reports_moduli() {
    let o = unitsum(&["obstruct", "--p", "7", "--q", "13", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"modulus\":7"));
    let o = unitsum(&["obstruct", "--p", "5", "--q", "23"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn expand_without_relation_exits_2() {
    let o = unitsum(&["expand", "--p", "5", "--q", "11", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_input_exits_3() {
    assert_eq!(
        unitsum(&["expand", "--p", "6", "--q", "9", "3"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        unitsum(&["expand", "--p", "5", "--q", "23", "abc"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(unitsum(&["no-such-command"]).status.code(), Some(3));
    assert_eq!(
        unitsum(&["expand-extended", "--p", "5", "--q", "11", "1/3"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn cubic_verify_range() {
    let o = unitsum(&["cubic-verify", "--a-from", "-50", "--a-to", "50"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "101/101 relations verified, sum = 3\n");
}

#[test]
fn cubic_repr_json() {
    let o = unitsum(&["cubic-repr", "--a", "4", "3", "0", "0", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "{\"a\":\"4\",\"coords\":[\"3\",\"0\",\"0\"],\"steps\":1,\"terms\":[{\"k\":0,\"i\":-2,\"j\":-1,\"c\":1},{\"k\":0,\"i\":1,\"j\":-1,\"c\":1},{\"k\":0,\"i\":1,\"j\":2,\"c\":1}]}\n"
    );
    let o = unitsum(&[
        "cubic-repr",
        "--a",
        "2",
        "--max-steps",
        "1",
        "900",
        "-700",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bench_steps_csv() {
    let o = unitsum(&[
        "bench-steps",
        "--p",
        "5",
        "--q",
        "23",
        "--from",
        "1",
        "--to",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "n,w_init,steps,weight_final\n1,1,0,1\n2,2,1,2\n3,3,1,3\n4,4,5,4\n"
    );
}

#[test]
fn sweep_csv_and_failure() {
    let o = unitsum(&[
        "sweep", "--p", "5", "--q", "23", "--from", "995", "--to", "1003", "--oracle",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("v,status,weight_algo,weight_oracle,steps,w_init")
    );
    assert_eq!(lines.count(), 9);
    let o = unitsum(&[
        "sweep", "--p", "5", "--q", "11", "--from", "1", "--to", "50",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn extended_and_min_weight() {
    let o = unitsum(&[
        "expand-extended",
        "--p",
        "5",
        "--q",
        "11",
        "2",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "{\"kind\":\"extended\",\"p\":\"5\",\"q\":\"11\",\"value\":\"2\",\"terms\":[{\"d\":1,\"i\":-1,\"j\":1},{\"d\":-1,\"i\":-1,\"j\":0}]}\n"
    );
    let o = unitsum(&["min-weight", "--p", "5", "--q", "23", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("weight 2"));
    let o = unitsum(&[
        "min-weight",
        "--p",
        "5",
        "--q",
        "23",
        "--max-weight",
        "1",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = unitsum(&["min-weight", "--p", "5", "--q", "23", "--budget", "10", "2"]);
    assert_eq!(o.status.code(), Some(4));
}
