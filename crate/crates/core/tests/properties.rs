mod suites;

fn run(name: &str) {
    let suite = suites::SUITES.iter().find(|s| s.name == name).expect("known suite");
    if let Err(e) = (suite.run)() {
        panic!("{name}: {e}");
    }
}

#[test]
fn diamond_space_properties() {
    run("diamond space");
}

#[test]
fn edgelet_properties() {
    run("edgelets");
}

#[test]
fn kalman_properties() {
    run("kalman");
}

#[test]
fn iou_properties() {
    run("iou");
}

#[test]
fn second_vp_optimizer_properties() {
    run("second vp optimizer");
}

#[test]
fn kde_weight_properties() {
    run("kde weights");
}
