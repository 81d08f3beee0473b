mod common;

#[test]
fn catalog_matches_closed_forms() {
    let msg = common::catalog_oracles(1000, 50).unwrap();
    println!("{msg}");
}

#[test]
fn every_entry_is_listed_once() {
    let names = optevo::catalog::names();
    assert_eq!(names.len(), 30);
    let mut sorted = names.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 30);
}
