use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use delaylift::delay::HistorySegment;
use delaylift::exec::Exec;
use delaylift::sde::{brownian_path, mc_estimate, simulate_states};
use delaylift::signal::Signal;
use delaylift::systems::{make_heat, SystemSpec};
use delaylift::{CVector, C64};

fn monte_carlo(c: &mut Criterion) {
    let ls = make_heat(&SystemSpec::heat()).unwrap();
    let n = ls.steps(2.0).unwrap();
    let xi = CVector::from_element(ls.bt().n(), C64::new(1.0, 0.0));
    let phi = HistorySegment::from_fn(ls.r(), ls.m(), 1, |_| CVector::from_element(1, C64::new(0.5, 0.0)));
    let u = Signal::scalar(ls.dt(), n, |t| 0.5 * (-0.5 * t).exp());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut group = c.benchmark_group("final_energy_mc_32_paths");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel { threads: Some(threads) }),
    ] {
        group.bench_function(BenchmarkId::new(name, threads), |b| {
            b.iter(|| {
                mc_estimate(exec, 32, |p| {
                    let path = brownian_path(n, ls.dt(), 1, p)?;
                    let states = simulate_states(&ls, &xi, &phi, &u, &path)?;
                    Ok(ls.bt().metric().norm(&states[n].x).powi(2))
                })
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo);
criterion_main!(benches);
