use serde_json::Value;

use cooperrisk::riskmap::{from_bytes, to_bytes, GridSpec, RiskMap};
use cooperrisk::scenario::{generate_scenario, Template};

fn required(v: &Value) -> Vec<&str> {
    v["required"].as_array().unwrap().iter().map(|k| k.as_str().unwrap()).collect()
}

#[test]
fn scenario_json_matches_schema_keys() {
    let schema: Value = serde_json::from_str(include_str!("../schema/scenario.schema.json")).unwrap();
    let log: Value = serde_json::from_str(&generate_scenario(Template::Crossing, 3, 5).unwrap().to_json().unwrap()).unwrap();
    let defs = &schema["$defs"];
    let check = |obj: &Value, keys: Vec<&str>| {
        let map = obj.as_object().unwrap();
        for k in &keys {
            assert!(map.contains_key(*k), "missing {k}");
        }
        for k in map.keys() {
            assert!(keys.contains(&k.as_str()), "undocumented {k}");
        }
    };
    let top = &schema["properties"];
    check(&log, schema["properties"].as_object().unwrap().keys().map(String::as_str).collect());
    check(&log["meta"], required(&top["meta"]));
    check(&log["ego"], required(&top["ego"]));
    check(&log["map_extent"], required(&top["map_extent"]));
    check(&log["agents"][0], required(&top["agents"]["items"]));
    check(&log["agents"][0]["poses"][0], required(&defs["pose"]));
    check(&log["agents"][0]["noise"], required(&defs["noise"]));
    check(&log["occluders"][0], required(&defs["obb"]));
    check(&log["frames"][0], required(&top["frames"]["items"]));
    check(&log["frames"][0]["objects"][0], required(&defs["object"]));
}

#[test]
fn risk_map_binary_layout() {
    let grid = GridSpec::new([-3.5, 2.0], 0.25, 5, 3).unwrap();
    let mut map = RiskMap::zeros(grid, 2, 0.5);
    map.layers[1][7] = 1.5;
    let bytes = to_bytes(&map).unwrap();
    assert_eq!(&bytes[..4], b"CRSK");
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let f32_at = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    assert_eq!(u16_at(4), 1);
    assert_eq!((u32_at(6), u32_at(10)), (5, 3));
    assert_eq!((f32_at(14), f32_at(18), f32_at(22)), (0.25, -3.5, 2.0));
    assert_eq!(u16_at(26), 2);
    assert_eq!(bytes.len(), 28 + 2 * 15 * 4);
    assert_eq!(f32_at(28 + (15 + 7) * 4), 1.5);
    assert_eq!(from_bytes(&bytes, 0.5).unwrap().layers, map.layers);
    assert!(from_bytes(&bytes[..40], 0.5).is_err());
}
