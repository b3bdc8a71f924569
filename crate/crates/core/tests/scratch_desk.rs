use blr_core::flux::{HullFlux, RockFluidParams};
use blr_core::moc::MocSolution;
use blr_core::net::{Activation, ArchSpec};
use blr_core::pinn::{l2_error, plateau_decrease, relative_l2_error, train, TrainConfig};
use blr_core::pinn::{Domain, FluxMode};
use std::time::Instant;

#[test]
#[ignore]
fn desk_scale_default_30k() {
    let p = RockFluidParams::default();
    let arch = ArchSpec::new(vec![2, 32, 32, 32, 32, 1], Activation::Tanh);
    let cfg = TrainConfig::default();
    let start = Instant::now();
    let (model, recs) = train(&cfg, &p, 1.0, &arch, &Domain::default()).unwrap();
    let dt = start.elapsed().as_secs_f64();
    let hull = HullFlux::build(&p, 1e-12).unwrap();
    let sol = MocSolution::new(hull, 1.0).unwrap();
    let rel = relative_l2_error(&model, &sol, 0.5, 2.0, 1000);
    let abs = l2_error(&model, &sol, 0.5, 2.0, 1000);
    println!(
        "desk 30k default: {:.0} s, rel_l2 {rel:.5}, abs_l2 {abs:.5}, final loss {:.7}, plateau_dec {:.3}",
        dt,
        recs.last().unwrap().loss_total,
        plateau_decrease(&recs)
    );
}

#[test]
#[ignore]
fn desk_scale_naive_30k() {
    let p = RockFluidParams::default();
    let arch = ArchSpec::new(vec![2, 32, 32, 32, 32, 1], Activation::Tanh);
    let cfg = TrainConfig {
        flux_mode: FluxMode::Naive,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, recs) = train(&cfg, &p, 1.0, &arch, &Domain::default()).unwrap();
    let dt = start.elapsed().as_secs_f64();
    let hull = HullFlux::build(&p, 1e-12).unwrap();
    let sol = MocSolution::new(hull, 1.0).unwrap();
    let rel = relative_l2_error(&model, &sol, 0.5, 2.0, 1000);
    println!(
        "desk 30k naive: {:.0} s, rel_l2 {rel:.5}, final loss {:.7}, plateau_dec {:.3}",
        dt,
        recs.last().unwrap().loss_total,
        plateau_decrease(&recs)
    );
}
