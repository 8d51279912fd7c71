//! Prints who each node polls at the first sampling instants and the delay
//! bound that the round-robin order guarantees per node.

use rrhoc::graph::DirectedGraph;
use rrhoc::schedule::SamplingSchedule;

fn main() -> rrhoc::Result<()> {
    // node 1 hears 2, 3 and 4; nodes 2..4 form a ring back to 1
    let graph =
        DirectedGraph::from_one_based(4, &[(2, 1), (3, 1), (4, 1), (1, 2), (2, 3), (3, 4)])?;
    let schedule = SamplingSchedule::uniform(0.1, 2.0)?;
    let taus = schedule.delay_bounds(&graph)?;

    for (i, tau) in taus.iter().enumerate() {
        let polls: Vec<String> = (0..8)
            .filter_map(|k| graph.polled_neighbor(i, k))
            .map(|j| (j + 1).to_string())
            .collect();
        println!(
            "node {}: in-degree {}, polls {} ..., tau = {:.3}",
            i + 1,
            graph.in_degree(i),
            polls.join(" "),
            tau
        );
    }
    println!(
        "network max delay {:.3} over {} instants",
        schedule.network_max_delay(&graph)?,
        schedule.len()
    );
    Ok(())
}
