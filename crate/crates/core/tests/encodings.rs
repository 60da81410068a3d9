//! Exhaustive checks of the linear encodings against direct evaluation.

use slas_core::highway::lane_indicator;
use slas_core::model::{encode_abs_safety, encode_floor, encode_implication, LinExpr, Program, VarId, VarKind, VarRole};

const TOL: f64 = 1e-9;

fn feasible(p: &Program, x: &[f64]) -> bool {
    p.rows.iter().all(|r| r.violation(x) <= TOL)
}

/// Integer values of `y` the floor rows admit for a fixed `x`.
fn floor_solutions(x: f64, eps: f64) -> Vec<i64> {
    let mut p = Program::default();
    let xv = p.add_var(VarKind::Continuous, x, x, VarRole::Aux);
    let y = encode_floor(&mut p, &LinExpr::var(xv), -10.0, 10.0, eps, VarRole::Aux, 0);
    (-10..=10)
        .filter(|&yv| {
            let mut a = [0.0; 2];
            a[xv.index()] = x;
            a[y.index()] = yv as f64;
            feasible(&p, &a)
        })
        .collect()
}

#[test]
fn floor_on_the_grid() {
    let eps = 0.1;
    let mut checked = 0;
    for k in -60i64..=60 {
        let x = k as f64 * 0.05;
        // fractional part in twentieths, exact
        let frac = k.rem_euclid(20);
        let expect = if frac <= 18 { vec![k.div_euclid(20)] } else { vec![] };
        assert_eq!(floor_solutions(x, eps), expect, "x = {x}");
        checked += 1;
    }
    assert_eq!(checked, 121);
}

#[test]
fn floor_of_lane_moving_average_is_the_indicator() {
    for n in 1..=4usize {
        let mut hist = vec![0usize; n];
        loop {
            let x = 0.5 + hist.iter().sum::<usize>() as f64 / n as f64;
            assert_eq!(floor_solutions(x, 0.1), vec![lane_indicator(&hist) as i64], "{hist:?}");
            let Some(i) = hist.iter().position(|&l| l < 2) else { break };
            hist[i] += 1;
            for l in &mut hist[..i] {
                *l = 0;
            }
        }
    }
}

#[test]
fn implication_over_all_binary_pairs() {
    for big_m in [1.0, 10.0, 1000.0] {
        for eps in [0.01, 0.1, 0.5] {
            let row = encode_implication(&LinExpr::var(VarId(0)), &LinExpr::var(VarId(1)), big_m, eps, 1);
            for a in [0.0, 1.0] {
                for b in [0.0, 1.0] {
                    let direct = a == 0.0 || b == 1.0;
                    assert_eq!(row.violation(&[a, b]) <= TOL, direct, "a={a} b={b} M={big_m} eps={eps}");
                }
            }
        }
    }
}

#[test]
fn implication_into_a_lane_set() {
    // lane 0 at j-1 forces lanes {0, 1} at j out of three
    let a = LinExpr::var(VarId(0));
    let targets = LinExpr::var(VarId(1)).term(VarId(2), 1.0);
    let row = encode_implication(&a, &targets, 1.0, 0.1, 2);
    for prev in [0.0, 1.0] {
        for lane in 0..3 {
            let mut x = [prev, 0.0, 0.0, 0.0];
            x[1 + lane] = 1.0;
            let direct = prev == 0.0 || lane < 2;
            assert_eq!(row.violation(&x) <= TOL, direct);
        }
    }
}

#[test]
fn abs_disjunction_over_gap_grid() {
    let (l_f, l_r, big_m) = (10.0, 5.0, 100.0);
    let mut p = Program::default();
    let d = p.add_var(VarKind::Continuous, -50.0, 50.0, VarRole::Aux);
    let g = p.add_var(VarKind::Binary, 0.0, 1.0, VarRole::Aux);
    let c = encode_abs_safety(
        &mut p,
        &LinExpr::var(d),
        &LinExpr::constant(l_f),
        &LinExpr::constant(l_r),
        Some(&LinExpr::var(g)),
        big_m,
        VarRole::Aux,
        1,
    );
    let mut cases = 0;
    for k in -80i32..=80 {
        let ds = k as f64 * 0.25;
        for gate in [0.0, 1.0] {
            for side in [0.0, 1.0] {
                let mut x = [0.0; 3];
                x[d.index()] = ds;
                x[g.index()] = gate;
                x[c.index()] = side;
                let direct = gate == 0.0 || (side == 0.0 && ds >= l_f) || (side == 1.0 && ds <= -l_r);
                assert_eq!(feasible(&p, &x), direct, "ds={ds} gate={gate} c={side}");
                cases += 1;
            }
            let some_side = [0.0, 1.0].iter().any(|&side| {
                let mut x = [0.0; 3];
                x[d.index()] = ds;
                x[g.index()] = gate;
                x[c.index()] = side;
                feasible(&p, &x)
            });
            assert_eq!(some_side, gate == 0.0 || ds >= l_f || ds <= -l_r);
        }
    }
    assert_eq!(cases, 161 * 4);
}

#[test]
fn abs_disjunction_with_speed_dependent_margins() {
    // l_f = 2 + 0.5 v, l_r = 6 - 0.2 v, no gate
    let mut p = Program::default();
    let d = p.add_var(VarKind::Continuous, -50.0, 50.0, VarRole::Aux);
    let v = p.add_var(VarKind::Continuous, 0.0, 15.0, VarRole::Aux);
    let l_f = LinExpr::constant(2.0).term(v, 0.5);
    let l_r = LinExpr::constant(6.0).term(v, -0.2);
    let c = encode_abs_safety(&mut p, &LinExpr::var(d), &l_f, &l_r, None, 100.0, VarRole::Aux, 1);
    for k in -40i32..=40 {
        let ds = k as f64 * 0.5;
        for speed in [0.0, 5.0, 10.0, 15.0] {
            for side in [0.0, 1.0] {
                let mut x = [0.0; 3];
                x[d.index()] = ds;
                x[v.index()] = speed;
                x[c.index()] = side;
                let direct = if side == 0.0 { ds >= 2.0 + 0.5 * speed } else { ds <= -(6.0 - 0.2 * speed) };
                assert_eq!(feasible(&p, &x), direct, "ds={ds} v={speed} c={side}");
            }
        }
    }
}
