//! Second-order splitting schedule, per-layer ansatz and composition of the
//! layers into a full-system superoperator.

use crate::chanrep::{
    channel_from_stack, choi_to_kraus, isometry_defect, kraus_to_stiefel, superop_to_choi,
    StiefelPoint, Superoperator,
};
use crate::engine::{Block, PairEngine};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::lindblad::{exact_propagator, Dissipator, LindbladModel};
use crate::linalg::{polar_factor, Mat};

/// Which bonds a layer acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    /// Pairs `(1,2), (3,4), ...`.
    Odd,
    /// Pairs `(2,3), ..., (N,1)`.
    Even,
}

impl Parity {
    pub fn offset(self) -> usize {
        match self {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerEntry {
    pub coeff: f64,
    pub parity: Parity,
}

/// `[(1/2, odd), (1, even), (1, odd), ..., (1, even), (1/2, odd)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSchedule {
    entries: Vec<LayerEntry>,
    n_tau: usize,
}

impl LayerSchedule {
    /// Arbitrary layer list; `n_tau` is only carried along.
    pub fn from_entries(entries: Vec<LayerEntry>, n_tau: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one layer".into()));
        }
        Ok(Self { entries, n_tau })
    }

    pub fn entries(&self) -> &[LayerEntry] {
        &self.entries
    }

    pub fn n_tau(&self) -> usize {
        self.n_tau
    }

    /// Number of layers, `2 n_tau + 1`.
    pub fn m(&self) -> usize {
        self.entries.len()
    }
}

pub fn layer_schedule(n_tau: usize) -> Result<LayerSchedule> {
    if n_tau < 1 {
        return Err(Error::InvalidArgument("n_tau must be at least 1".into()));
    }
    let m = 2 * n_tau + 1;
    let entries = (0..m)
        .map(|a| LayerEntry {
            coeff: if a == 0 || a == m - 1 { 0.5 } else { 1.0 },
            parity: if a % 2 == 0 { Parity::Odd } else { Parity::Even },
        })
        .collect();
    Ok(LayerSchedule { entries, n_tau })
}

/// `exp(c_a (tau / n_tau) D)` for every scheduled layer.
pub fn build_trotter_layers(dhat: &Dissipator, tau: f64, n_tau: usize) -> Result<Vec<Mat>> {
    let schedule = layer_schedule(n_tau)?;
    let dt = tau / n_tau as f64;
    let half = expm(&(dhat.matrix() * (0.5 * dt)))?;
    let full = expm(&(dhat.matrix() * dt))?;
    Ok(schedule
        .entries()
        .iter()
        .map(|e| if e.coeff == 0.5 { half.clone() } else { full.clone() })
        .collect())
}

/// One Stiefel point per scheduled layer, all of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometryVector {
    layers: Vec<StiefelPoint>,
    schedule: LayerSchedule,
}

impl IsometryVector {
    pub fn new(layers: Vec<StiefelPoint>, schedule: LayerSchedule) -> Result<Self> {
        if layers.len() != schedule.m() {
            return Err(Error::Shape(format!(
                "{} layers for a schedule of {}",
                layers.len(),
                schedule.m()
            )));
        }
        let (n, p) = (layers[0].n(), layers[0].p());
        if n % p != 0 || layers.iter().any(|x| x.n() != n || x.p() != p) {
            return Err(Error::Shape("layers must share a stacked n x p shape".into()));
        }
        Ok(Self { layers, schedule })
    }

    pub fn layers(&self) -> &[StiefelPoint] {
        &self.layers
    }

    pub fn schedule(&self) -> &LayerSchedule {
        &self.schedule
    }

    pub fn m(&self) -> usize {
        self.layers.len()
    }

    pub fn n(&self) -> usize {
        self.layers[0].n()
    }

    pub fn p(&self) -> usize {
        self.layers[0].p()
    }

    /// Kraus rank `R = n / p`.
    pub fn rank(&self) -> usize {
        self.n() / self.p()
    }

    pub fn matrices(&self) -> Vec<Mat> {
        self.layers.iter().map(|x| x.matrix().clone()).collect()
    }

    pub fn channels(&self) -> Result<Vec<Mat>> {
        self.layers.iter().map(|x| channel_from_stack(x.matrix())).collect()
    }
}

/// Rank-`r` Kraus ansatz of each layer channel.
///
/// Below the natural Choi rank the stacked Kraus operators are no longer
/// isometric; they are replaced by their polar factor, the closest point
/// on the Stiefel manifold.
pub fn build_ansatz(layers: &[Mat], r: usize, schedule: &LayerSchedule) -> Result<IsometryVector> {
    let points = layers
        .iter()
        .map(|lambda| {
            let s = Superoperator::new(lambda.clone(), 2, local_dim_of(lambda)?)?;
            let x = kraus_to_stiefel(&choi_to_kraus(&superop_to_choi(&s)?, r)?);
            if isometry_defect(&x) <= 1e-12 {
                Ok(StiefelPoint::from_isometry(x))
            } else {
                Ok(StiefelPoint::from_isometry(polar_factor(&x)?))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    IsometryVector::new(points, schedule.clone())
}

fn local_dim_of(lambda: &Mat) -> Result<usize> {
    let d = (lambda.nrows() as f64).powf(0.25).round() as usize;
    if d.pow(4) != lambda.nrows() || lambda.nrows() != lambda.ncols() {
        return Err(Error::Shape(format!(
            "two-site superoperator side {} is not d^4",
            lambda.nrows()
        )));
    }
    Ok(d)
}

/// Product of layer superoperators, first layer acting first.
pub fn compose_channels(
    channels: &[Mat],
    schedule: &LayerSchedule,
    sites: usize,
) -> Result<Superoperator> {
    if channels.len() != schedule.m() {
        return Err(Error::Shape(format!(
            "{} channels for a schedule of {}",
            channels.len(),
            schedule.m()
        )));
    }
    let d = local_dim_of(&channels[0])?;
    let engine = PairEngine::new(sites, d)?;
    let mut acc = Block::identity(engine.side);
    for (phi, entry) in channels.iter().zip(schedule.entries()) {
        let op = Block::from_mat(phi).data;
        acc = engine.apply_layer(entry.parity.offset(), &op, &acc);
    }
    Superoperator::new(acc.to_mat(), sites, d)
}

pub fn compose_global(xs: &IsometryVector, sites: usize) -> Result<Superoperator> {
    compose_channels(&xs.channels()?, xs.schedule(), sites)
}

/// Splitting with exact layer exponentials.
pub fn trotter_superop(
    model: &LindbladModel,
    tau: f64,
    n_tau: usize,
    sites: usize,
) -> Result<Superoperator> {
    let layers = build_trotter_layers(&model.dissipator(), tau, n_tau)?;
    compose_channels(&layers, &layer_schedule(n_tau)?, sites)
}

/// `||exp(tau L) - S_trotter||_F`.
pub fn trotter_error(model: &LindbladModel, tau: f64, n_tau: usize, sites: usize) -> Result<f64> {
    let exact = exact_propagator(model, tau, sites)?;
    let approx = trotter_superop(model, tau, n_tau, sites)?;
    Ok((exact.matrix() - approx.matrix()).norm())
}
