use qdrl_demo::{gridworld, loss_curve, projections};

#[test]
fn projections_of_mixture() {
    let p = projections("[[0,0.3333333333333333],[2,0.3333333333333333],[3,0.16666666666666666],[5,0.16666666666666669]]", 2, 6, 0.0, 5.0)
        .unwrap();
    assert_eq!(p.quantile, vec![0.0, 3.0]);
    // Every atom sits on the support, so C51 reproduces the target.
    assert!(p.c51_w1 < 1e-12);
    assert!(p.quantile_w1 > 0.0);
    assert!(projections("[[0,1]]", 2, 1, 0.0, 1.0).is_err());
    assert!(projections("not json", 2, 3, 0.0, 1.0).is_err());
}

#[test]
fn loss_curve_shape() {
    let c = loss_curve(0.25, 0.0, -1.0, 1.0, 5).unwrap();
    assert_eq!(c.u, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    assert_eq!(c.loss, vec![0.75, 0.375, 0.0, 0.125, 0.25]);
    assert_eq!(c.grad[0], -0.75);
    assert_eq!(c.grad[4], 0.25);
    assert!(loss_curve(1.0, 0.0, -1.0, 1.0, 5).is_err());
}

#[test]
fn gridworld_run_approaches_monte_carlo() {
    let short = gridworld(100, 8, 200, 0).unwrap();
    let long = gridworld(3000, 8, 200, 0).unwrap();
    assert_eq!(long.theta.len(), 8);
    assert_eq!(long.monte_carlo.len(), 200);
    assert!(long.w1 < short.w1);
    assert!(long.theta.windows(2).all(|w| w[0] <= w[1]));
}
