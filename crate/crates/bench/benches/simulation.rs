//! Flow-simulator throughput: events per second under the centralized
//! policy on a single queue and on a four-location two-cell network.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mimoflow_core::instances::random_cells;
use mimoflow_core::{
    effective_gains, simulate, ArrivalConfig, Location, NetworkTopology, PhyParams, Policy,
    SimParams,
};

fn single_queue(c: &mut Criterion) {
    let phy = PhyParams::new(100, 8, 1.0).unwrap();
    let topo = NetworkTopology::new(
        &phy,
        vec![10.0],
        vec![Location { cell: 0, pilot: 1, gains: vec![1.0] }],
    )
    .unwrap();
    let gains = effective_gains(&phy, &topo).unwrap();
    // Service rate is ln(81), so this is moderate load with real backlog.
    let arrivals = ArrivalConfig::exponential(vec![2.0]);
    c.bench_function("simulate/single_queue_500_slots", |b| {
        b.iter(|| {
            let params = SimParams::new(arrivals.clone(), Policy::Centralized, 500.0, 13);
            simulate(black_box(&topo), black_box(&gains), &params).unwrap()
        })
    });
}

fn two_cells(c: &mut Criterion) {
    let (topo, gains) = random_cells(5, 2, 2);
    let arrivals = ArrivalConfig::exponential(vec![0.3; topo.num_locations()]);
    c.bench_function("simulate/two_cells_200_slots", |b| {
        b.iter(|| {
            let params = SimParams::new(arrivals.clone(), Policy::Centralized, 200.0, 13);
            simulate(black_box(&topo), black_box(&gains), &params).unwrap()
        })
    });
}

criterion_group!(benches, single_queue, two_cells);
criterion_main!(benches);
