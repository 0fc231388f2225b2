//! Bundled feeders and load profiles.

use crate::error::Result;
use crate::feeder::{parse_feeder_str, parse_profile_str, Feeder, LoadProfile};

pub const IEEE13: &str = include_str!("../fixtures/ieee13.json");
pub const IEEE13_PEAK: &str = include_str!("../fixtures/ieee13_peak.csv");
pub const IEEE13_24H: &str = include_str!("../fixtures/ieee13_24h.csv");
pub const IEEE13_HIGH_PV: &str = include_str!("../fixtures/ieee13_high_pv.csv");
pub const IEEE37: &str = include_str!("../fixtures/ieee37.json");
pub const IEEE37_PEAK: &str = include_str!("../fixtures/ieee37_peak.csv");
pub const IEEE37_24H: &str = include_str!("../fixtures/ieee37_24h.csv");
pub const ONE_BRANCH: &str = include_str!("../fixtures/one_branch.json");
pub const THREE_NODE: &str = include_str!("../fixtures/three_node.json");
pub const THREE_NODE_CAP: &str = include_str!("../fixtures/three_node_cap.json");

pub fn ieee13() -> Result<Feeder> {
    parse_feeder_str(IEEE13)
}

pub fn ieee37() -> Result<Feeder> {
    parse_feeder_str(IEEE37)
}

pub fn one_branch() -> Result<Feeder> {
    parse_feeder_str(ONE_BRANCH)
}

pub fn three_node() -> Result<Feeder> {
    parse_feeder_str(THREE_NODE)
}

pub fn three_node_cap() -> Result<Feeder> {
    parse_feeder_str(THREE_NODE_CAP)
}

/// Looks up a bundled feeder by name (`ieee13`, `ieee37`, `one-branch`, `three-node`, `three-node-cap`).
pub fn feeder(name: &str) -> Option<Result<Feeder>> {
    Some(match name {
        "ieee13" => ieee13(),
        "ieee37" => ieee37(),
        "one-branch" => one_branch(),
        "three-node" => three_node(),
        "three-node-cap" => three_node_cap(),
        _ => return None,
    })
}

/// Looks up a bundled profile by name (`ieee13-peak`, `ieee13-24h`, `ieee13-high-pv`, `ieee37-peak`, `ieee37-24h`).
pub fn profile(name: &str, feeder: &Feeder) -> Option<Result<LoadProfile>> {
    let src = match name {
        "ieee13-peak" => IEEE13_PEAK,
        "ieee13-24h" => IEEE13_24H,
        "ieee13-high-pv" => IEEE13_HIGH_PV,
        "ieee37-peak" => IEEE37_PEAK,
        "ieee37-24h" => IEEE37_24H,
        _ => return None,
    };
    Some(parse_profile_str(src, feeder))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data_parses() {
        for (f, n) in [(ieee13().unwrap(), 12), (ieee37().unwrap(), 36)] {
            assert_eq!(f.n(), n);
        }
        let f = ieee13().unwrap();
        assert_eq!((f.oltcs.len(), f.caps.len(), f.ders.len()), (1, 2, 6));
        for p in ["ieee13-peak", "ieee13-24h", "ieee13-high-pv"] {
            profile(p, &f).unwrap().unwrap();
        }
        let f = ieee37().unwrap();
        assert_eq!((f.oltcs.len(), f.caps.len(), f.ders.len()), (1, 6, 5));
        assert_eq!(profile("ieee37-24h", &f).unwrap().unwrap().horizon(), 24);
        for name in ["one-branch", "three-node", "three-node-cap"] {
            feeder(name).unwrap().unwrap();
        }
        assert!(feeder("nope").is_none());
    }
}
