use serde::{Deserialize, Serialize};

use crate::ambisonics::{N_BINS, N_CLASS, N_OVERLAP};
use crate::error::{Error, Result};
use crate::nn::{Algebra, Pathway};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Real-valued single Conv-TC stack.
    Real,
    /// Two parallel quaternion Conv-TC stacks, one per microphone.
    Quaternion,
    /// One dual-quaternion Conv-TC stack.
    Dualq,
    /// Two dual-quaternion Conv-TC stacks for magnitudes and phases.
    DualqParallel,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Real,
        ModelKind::Quaternion,
        ModelKind::Dualq,
        ModelKind::DualqParallel,
    ];

    pub fn algebra(self) -> Algebra {
        match self {
            ModelKind::Real => Algebra::Real,
            ModelKind::Quaternion => Algebra::Quaternion,
            ModelKind::Dualq | ModelKind::DualqParallel => Algebra::DualQuaternion,
        }
    }

    pub fn n_stacks(self) -> usize {
        match self {
            ModelKind::Real | ModelKind::Dualq => 1,
            ModelKind::Quaternion | ModelKind::DualqParallel => 2,
        }
    }

    /// Parallel variants use real-valued classifier branches.
    pub fn head_algebra(self) -> Algebra {
        if self.n_stacks() > 1 {
            Algebra::Real
        } else {
            self.algebra()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Real => "real",
            ModelKind::Quaternion => "quaternion",
            ModelKind::Dualq => "dualq",
            ModelKind::DualqParallel => "dualq_parallel",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// First `n` Fibonacci numbers starting 1, 1.
pub fn fibonacci(n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let (mut a, mut b) = (1, 1);
    for _ in 0..n {
        out.push(a);
        (a, b) = (b, a + b);
    }
    out
}

/// Input frames touching one output frame of the dilated stack.
pub fn receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    1 + (kernel - 1) * dilations.iter().sum::<usize>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub include_phase: bool,
    /// Filters of each 3×3 convolution.
    pub conv_filters: usize,
    /// Frequency max-pool width after each convolution.
    pub conv_pooling: Vec<usize>,
    pub conv_dropout: f64,
    pub n_resblocks: usize,
    pub dilations: Vec<usize>,
    pub tc_kernel: usize,
    pub tc_filters: usize,
    pub skip_filters: usize,
    pub residual_filters: usize,
    pub final_filters: usize,
    pub spatial_dropout: f64,
    pub head_width: usize,
    pub head_dropout: f64,
    pub n_class: usize,
    pub n_overlap: usize,
    /// STFT frames per input example; fixes the temporal pooling together
    /// with `output_frames`.
    pub input_frames: usize,
    pub output_frames: usize,
    pub pathway: Pathway,
}

impl ModelConfig {
    /// Full-size settings. `quaternion` uses the narrower of the two
    /// quaternion baselines; see [`ModelConfig::quaternion_wide`].
    pub fn paper(kind: ModelKind) -> Self {
        let (p, g, r) = match kind {
            ModelKind::Real | ModelKind::Quaternion => (64, 128, 128),
            ModelKind::Dualq => (192, 384, 384),
            ModelKind::DualqParallel => (192, 384, 128),
        };
        Self {
            kind,
            include_phase: kind == ModelKind::DualqParallel,
            conv_filters: p,
            conv_pooling: vec![8, 8, 2],
            conv_dropout: 0.3,
            n_resblocks: 10,
            dilations: fibonacci(10),
            tc_kernel: 3,
            tc_filters: g,
            skip_filters: g,
            residual_filters: 2 * p,
            final_filters: g,
            spatial_dropout: 0.5,
            head_width: r,
            head_dropout: 0.3,
            n_class: N_CLASS,
            n_overlap: N_OVERLAP,
            input_frames: 7499,
            output_frames: 600,
            pathway: Pathway::Split,
        }
    }

    /// The wider quaternion baseline.
    pub fn quaternion_wide() -> Self {
        let mut c = Self::paper(ModelKind::Quaternion);
        c.conv_filters = 92;
        c.tc_filters = 184;
        c.skip_filters = 184;
        c.residual_filters = 184;
        c.final_filters = 184;
        c
    }

    /// Small settings for CPU experiments on 2-second scenes: dual-quaternion
    /// widths divided by 8, four residual blocks, dropout disabled. Every
    /// kind shares the same real widths.
    pub fn desk(kind: ModelKind) -> Self {
        let mut c = Self::paper(ModelKind::Dualq);
        c.kind = kind;
        c.include_phase = kind == ModelKind::DualqParallel;
        c.conv_filters = 24;
        c.tc_filters = 48;
        c.skip_filters = 48;
        c.residual_filters = 48;
        c.final_filters = 48;
        c.head_width = 48;
        c.n_resblocks = 4;
        c.dilations = fibonacci(4);
        c.conv_dropout = 0.0;
        c.spatial_dropout = 0.0;
        c.head_dropout = 0.0;
        c.input_frames = 249;
        c.output_frames = 20;
        c
    }

    /// Smallest widths each algebra allows, two residual blocks and 8-frame
    /// inputs pooled to 2 outputs. Meant for tests and smoke runs.
    pub fn tiny(kind: ModelKind) -> Self {
        let mut c = Self::desk(kind);
        let w = if kind.algebra() == Algebra::Real {
            4
        } else {
            kind.algebra().dim()
        };
        c.conv_filters = w;
        c.tc_filters = w;
        c.skip_filters = w;
        c.residual_filters = 2 * w;
        c.final_filters = w;
        c.head_width = kind.head_algebra().dim().max(4);
        c.n_resblocks = 2;
        c.dilations = fibonacci(2);
        c.input_frames = 8;
        c.output_frames = 2;
        c
    }

    pub fn input_channels(&self) -> usize {
        if self.include_phase {
            16
        } else {
            8
        }
    }

    /// Frequency bins left after the convolution block.
    pub fn pooled_bins(&self) -> usize {
        self.conv_pooling.iter().fold(N_BINS, |f, &w| f.div_ceil(w))
    }

    /// Channels entering the temporal block after frequency is stacked in.
    pub fn tc_input_channels(&self) -> usize {
        self.pooled_bins() * self.conv_filters
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.tc_kernel, &self.dilations)
    }

    /// Two temporal max-pool widths whose product is the largest value not
    /// exceeding `input_frames / output_frames`.
    pub fn time_pooling(&self) -> [usize; 2] {
        let total = (self.input_frames / self.output_frames.max(1)).max(1);
        let first = (total as f64).sqrt().ceil() as usize;
        let first = first.clamp(1, total);
        [first, (total / first).max(1)]
    }

    pub fn frames_out(&self, frames_in: usize) -> usize {
        let [a, b] = self.time_pooling();
        frames_in / a / b
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_class != N_CLASS || self.n_overlap != N_OVERLAP {
            return bad(format!(
                "targets are fixed at {N_CLASS} classes x {N_OVERLAP} slots, got {} x {}",
                self.n_class, self.n_overlap
            ));
        }
        if self.kind == ModelKind::DualqParallel && !self.include_phase {
            return bad("dualq_parallel needs include_phase".into());
        }
        if self.conv_pooling.len() != 3 || self.conv_pooling.contains(&0) {
            return bad(format!(
                "conv_pooling must list three positive widths, got {:?}",
                self.conv_pooling
            ));
        }
        if self.n_resblocks == 0 || self.dilations != fibonacci(self.n_resblocks) {
            return bad(format!(
                "dilations must be the first {} Fibonacci numbers, got {:?}",
                self.n_resblocks, self.dilations
            ));
        }
        if self.tc_kernel.is_multiple_of(2) {
            return bad("tc_kernel must be odd".into());
        }
        for (name, p) in [
            ("conv_dropout", self.conv_dropout),
            ("spatial_dropout", self.spatial_dropout),
            ("head_dropout", self.head_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1)"));
            }
        }
        let dim = self.kind.algebra().dim();
        for (name, w) in [
            ("conv_filters", self.conv_filters),
            ("tc_filters", self.tc_filters),
            ("skip_filters", self.skip_filters),
            ("residual_filters", self.residual_filters),
            ("final_filters", self.final_filters),
        ] {
            if w == 0 || w % dim != 0 {
                return bad(format!("{name} = {w} is not a positive multiple of {dim}"));
            }
        }
        let head_dim = self.kind.head_algebra().dim();
        if self.head_width == 0 || !self.head_width.is_multiple_of(head_dim) {
            return bad(format!(
                "head_width = {} is not a positive multiple of {head_dim}",
                self.head_width
            ));
        }
        if self.residual_filters != self.tc_input_channels() {
            return bad(format!(
                "residual_filters ({}) must equal the stacked channel count {} = {} bins x {} filters",
                self.residual_filters,
                self.tc_input_channels(),
                self.pooled_bins(),
                self.conv_filters
            ));
        }
        if self.output_frames == 0 || self.input_frames < self.output_frames {
            return bad(format!(
                "cannot pool {} input frames to {} outputs",
                self.input_frames, self.output_frames
            ));
        }
        Ok(())
    }
}
