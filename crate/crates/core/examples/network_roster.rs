//! Prints the layer tables and parameter counts of all five networks.
//!
//! cargo run --release --example network_roster -- [size] [g2_width_scale]

use dsalgan::nets::{build_saliency_generator_spec, NetworkSpec};
use dsalgan::train::{NetConfig, NetSpecs};

fn print_spec(spec: &NetworkSpec, input: (usize, usize, usize)) -> dsalgan::Result<()> {
    println!("{} ({} parameters)", spec.name, spec.param_count()?);
    let shapes = spec.propagate(input)?;
    for (layer, out) in spec.layers.iter().zip(shapes.iter().skip(1)) {
        println!(
            "  {:<10} {:<15} k{}x{} s{} p{} {:<8} -> {}x{}x{}",
            layer.name,
            format!("{:?}", layer.kind),
            layer.kernel.0,
            layer.kernel.1,
            layer.stride,
            layer.padding,
            format!("{:?}", layer.activation),
            out.0,
            out.1,
            out.2
        );
    }
    Ok(())
}

fn main() -> dsalgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let size: usize = args.next().map(|s| s.parse().expect("size")).unwrap_or(64);
    let g2_width_scale: f64 = args.next().map(|s| s.parse().expect("width scale")).unwrap_or(0.125);

    let specs = NetSpecs::build(&NetConfig { g2_width_scale, ..NetConfig::default() }, size)?;
    for spec in specs.iter() {
        print_spec(spec, (spec.input_channels, size, size))?;
    }

    let full = build_saliency_generator_spec(1.0)?;
    println!("full-width G2: {} parameters", full.param_count()?);
    Ok(())
}
