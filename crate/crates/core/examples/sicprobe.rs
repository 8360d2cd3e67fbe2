use noma_isac::scenario::{generate_channels, ScenarioConfig};

fn main() {
    let config = ScenarioConfig::default();
    let set = generate_channels(&config, 42, 0);
    for (k, h) in set.channels.iter().enumerate() {
        let n2 = h.norm_squared();
        let bar = -1e-6 * 0.1 * n2;
        println!("user {k}: ||h||^2 = {n2:.6e}  bar = {bar:.6e}");
    }
}
