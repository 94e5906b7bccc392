use crate::unit::Sample;

/// Direct-form FIR, y[n] = Σ taps[k]·x[n−k], with zero prehistory.
pub fn fir_filter(x: &[Sample], taps: &[f64]) -> Vec<Sample> {
    let mut state = FirState::new(taps.to_vec());
    let mut y = vec![Sample::ZERO; x.len()];
    state.run(x, &mut y);
    y
}

/// Streaming FIR that carries its delay line across calls.
#[derive(Debug, Clone)]
pub struct FirState {
    taps: Vec<f64>,
    history: Vec<Sample>,
    pos: usize,
}

impl FirState {
    pub fn new(taps: Vec<f64>) -> Self {
        assert!(!taps.is_empty(), "tap set must not be empty");
        let n = taps.len();
        Self {
            taps,
            history: vec![Sample::ZERO; n],
            pos: 0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn reset(&mut self) {
        self.history.fill(Sample::ZERO);
        self.pos = 0;
    }

    pub fn run(&mut self, x: &[Sample], y: &mut [Sample]) {
        let n = self.taps.len();
        for (xi, yi) in x.iter().zip(y.iter_mut()) {
            self.history[self.pos] = *xi;
            let mut acc = Sample::ZERO;
            let mut idx = self.pos;
            for &t in &self.taps {
                acc = acc.add(self.history[idx].scale(t));
                idx = if idx == 0 { n - 1 } else { idx - 1 };
            }
            *yi = acc;
            self.pos = (self.pos + 1) % n;
        }
    }
}
