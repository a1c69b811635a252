mod common;

use common::{forward_view, gradient_errors, random_scene, Probe};

#[test]
fn fifty_primitive_gradients_match_central_differences() {
    let scene = random_scene(50, 10, 4);
    let view = forward_view(64, 48);
    let errors = gradient_errors(&scene, &view, 0.0, 240, 17);
    let tight = errors.iter().filter(|e| **e <= 1e-3).count();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    assert!(tight * 100 >= errors.len() * 95, "{tight}/{} within 1e-3", errors.len());
    assert!(worst <= 1e-2, "worst relative error {worst}");
}

#[test]
fn gradient_step_lowers_the_probe() {
    let mut scene = random_scene(20, 5, 9);
    let view = forward_view(48, 32);
    let probe = Probe::new(&scene, &view, 0.0, 3);
    let before = probe.value(&scene, &view, 0.0);
    let g = probe.gradient(&scene, &view, 0.0);
    let norm2: f64 = g.primitives.iter().map(|v| v * v).sum();
    let step = 1e-3 / norm2.sqrt();
    let mut x = scene.pack_primitives();
    for (p, d) in x.iter_mut().zip(&g.primitives) {
        *p -= step * d;
    }
    scene.unpack_primitives(&x);
    let after = probe.value(&scene, &view, 0.0);
    // first-order prediction of the decrease
    let predicted = step * norm2;
    assert!(before - after > 0.5 * predicted, "{before} → {after}, predicted −{predicted}");
}
