//! Built-in experiment scenarios.
//!
//! All presets use 128-antenna APs, a 200 mW per-link uplink budget, a
//! 200K mW per-AP downlink budget, and 40/5/100 m minimum AP-UE / UE-UE /
//! AP-AP distances. The single-link trio differs only in which decision
//! variables are free; the cell-free trio scales the unit counts.

use cfpc_core::bo_loop::{CodecMode, Method};
use cfpc_core::topology::NetworkConfig;

#[derive(Debug, Clone)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub network: NetworkConfig,
    pub codec: CodecMode,
    pub methods: Vec<Method>,
    pub budget: usize,
    pub seeds: Vec<u64>,
}

fn base_network(num_aps: usize, num_ues: usize, area_side: f64) -> NetworkConfig {
    let mut c = NetworkConfig::new(num_aps, num_ues, 128);
    c.area_side = area_side;
    c.seed = 42;
    c
}

fn all_methods() -> Vec<Method> {
    vec![Method::Nehvi, Method::Ehvi, Method::Sobol]
}

const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

pub fn preset_names() -> Vec<&'static str> {
    vec![
        "link1x1_powers",
        "link1x1_weights",
        "link1x1_mixed",
        "cf5x5",
        "cf30x20",
        "cf60x40",
    ]
}

pub fn preset(name: &str) -> Option<ScenarioPreset> {
    let (network, codec, budget) = match name {
        "link1x1_powers" => (base_network(1, 1, 500.0), CodecMode::PowersOnly, 50),
        "link1x1_weights" => (base_network(1, 1, 500.0), CodecMode::WeightsOnly, 50),
        "link1x1_mixed" => (base_network(1, 1, 500.0), CodecMode::Mixed, 50),
        "cf5x5" => (base_network(5, 5, 1000.0), CodecMode::Full, 50),
        "cf30x20" => (base_network(20, 30, 1500.0), CodecMode::Full, 100),
        "cf60x40" => (base_network(40, 60, 2000.0), CodecMode::Full, 100),
        _ => return None,
    };
    Some(ScenarioPreset {
        name: match name {
            "link1x1_powers" => "link1x1_powers",
            "link1x1_weights" => "link1x1_weights",
            "link1x1_mixed" => "link1x1_mixed",
            "cf5x5" => "cf5x5",
            "cf30x20" => "cf30x20",
            "cf60x40" => "cf60x40",
            _ => unreachable!(),
        },
        network,
        codec,
        methods: all_methods(),
        budget,
        seeds: DEFAULT_SEEDS.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_exist_with_pinned_budgets() {
        for name in preset_names() {
            let p = preset(name).unwrap();
            assert_eq!(p.network.antennas_per_ap, 128);
            assert_eq!(p.network.p_max_ul, 0.2);
            assert_eq!(p.network.p_max_dl, 0.2 * p.network.num_ues as f64);
            assert_eq!(p.network.min_dist_ap_ue, 40.0);
            assert_eq!(p.network.min_dist_ue_ue, 5.0);
            assert_eq!(p.network.min_dist_ap_ap, 100.0);
            assert_eq!(p.network.pilot_len, p.network.num_ues);
            p.network.validate().unwrap();
        }
        assert_eq!(preset("cf30x20").unwrap().network.num_ues, 30);
        assert_eq!(preset("cf30x20").unwrap().network.num_aps, 20);
        assert_eq!(preset("cf60x40").unwrap().budget, 100);
        assert!(preset("nope").is_none());
    }
}
