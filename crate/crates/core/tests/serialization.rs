mod common;

#[test]
fn genomes_round_trip() {
    println!("{}", common::serialization(10_000).unwrap());
}

#[test]
fn malformed_text_is_rejected() {
    assert!(optevo::deserialize("{}").is_err());
    assert!(optevo::deserialize("not json").is_err());
    let mut text = optevo::serialize(&optevo::catalog::build("Adam").unwrap().genome);
    text = text.replace("\"v_hat\"", "\"nope\"");
    assert!(optevo::deserialize(&text).is_err());
}
