//! Registers a new unit kind, runs it on its own thread between two links and
//! changes its gain register while samples flow.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use sdrplane::unit::{
    Behavior, BlockKind, Catalog, IoShape, Link, RegisterSpec, Registers, Sample, UnitDescriptor, UnitError,
    UnitRunner,
};

struct GainKind;
struct Gain(f64);

impl BlockKind for GainKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let w = regs.get("window") as usize;
        Ok(IoShape::new(w, w))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(Gain(regs.get("gain") as f64))
    }
}

impl Behavior for Gain {
    fn reconfigure(&mut self, regs: &Registers) {
        self.0 = regs.get("gain") as f64;
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        for (o, i) in outputs[0].iter_mut().zip(inputs[0]) {
            *o = i.scale(self.0);
        }
    }
}

fn main() {
    let catalog = Catalog::new();
    catalog
        .register_kind(
            UnitDescriptor {
                kind: "gain".into(),
                n_inputs: 1,
                n_outputs: 1,
                samples_in_per_step: 8,
                samples_out_per_step: 8,
                throughput_sps: 3e8,
                latency_cycles: 4,
                cycles_per_step: 8,
                cost_logic_cells: 120,
                cost_dsp_slices: 2,
                register_map: vec![RegisterSpec::new(0, "window", 1, 1024, 8), RegisterSpec::new(4, "gain", 0, 100, 1)],
            },
            Arc::new(GainKind),
        )
        .unwrap();
    println!("{:#?}", catalog.descriptor("gain").unwrap());

    let unit = catalog.create_unit("gain", &BTreeMap::from([("gain".to_string(), 2)])).unwrap();
    let regs = unit.registers();
    let (input, output) = (Link::new(64).unwrap(), Link::new(64).unwrap());
    let mut runner = UnitRunner::spawn("gain0", unit, vec![input.clone()], vec![output.clone()]);

    input.push_slice(&[Sample::new(1.0, -1.0); 8]).unwrap();
    println!("gain 2: {:?}", first_of(&output, 8));
    regs.write_reg(regs.offset_of("gain").unwrap(), 5).unwrap();
    input.push_slice(&[Sample::new(1.0, -1.0); 8]).unwrap();
    println!("gain 5: {:?}", first_of(&output, 8));

    input.close();
    runner.join_timeout(Duration::from_secs(1));
}

/// First sample of the next `n` read from `link`.
fn first_of(link: &Link, n: usize) -> Sample {
    let mut out = Vec::new();
    while out.len() < n {
        link.pop_up_to(n - out.len(), &mut out, Duration::from_secs(1));
    }
    out[0]
}
