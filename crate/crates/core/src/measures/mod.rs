//! Sample access to data distributions.
//!
//! Everything downstream sees a distribution only through [`Sampler::draw`].
//! Samplers own their random stream; two samplers built from the same source
//! and seed produce identical draw sequences.

mod csv_io;
mod empirical;
mod pushforward;
mod stream;
mod synthetic;

use std::io::BufRead;

pub use csv_io::{load_csv, parse_csv, write_csv, Standardizer};
pub use empirical::EmpiricalSampler;
pub use pushforward::{pushforward, PointMap, PushforwardSampler};
pub use stream::StreamSampler;
pub use synthetic::{banana_map, GaussianComponent, SyntheticSampler, SyntheticSpec};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::Rng;

/// Sample access to a distribution on `ℝ^dim`.
pub trait Sampler: Send {
    fn dim(&self) -> usize;

    /// `count` i.i.d. samples. Streams return [`Error::Exhausted`] when they
    /// cannot fill the request.
    fn draw(&mut self, count: usize) -> Result<PointSet>;

    /// Copy of the internal generator, for checkpointing. `None` for samplers
    /// whose position cannot be captured (streams).
    fn rng_snapshot(&self) -> Option<Rng> {
        None
    }

    /// Reinstall a generator captured by [`Sampler::rng_snapshot`].
    fn restore_rng(&mut self, _rng: Rng) -> Result<()> {
        Err(Error::InvalidInput("sampler state cannot be restored".into()))
    }
}

impl<S: Sampler + ?Sized> Sampler for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn draw(&mut self, count: usize) -> Result<PointSet> {
        (**self).draw(count)
    }

    fn rng_snapshot(&self) -> Option<Rng> {
        (**self).rng_snapshot()
    }

    fn restore_rng(&mut self, rng: Rng) -> Result<()> {
        (**self).restore_rng(rng)
    }
}

/// Where samples come from.
pub enum SamplerSource {
    Synthetic(SyntheticSpec),
    Empirical(PointSet),
    Stream(Box<dyn BufRead + Send>),
}

/// Build a sampler over `source`, seeded with `seed`.
pub fn make_sampler(source: SamplerSource, seed: u64) -> Result<Box<dyn Sampler>> {
    Ok(match source {
        SamplerSource::Synthetic(spec) => spec.sampler(seed)?,
        SamplerSource::Empirical(data) => Box::new(EmpiricalSampler::new(data, seed)?),
        SamplerSource::Stream(reader) => Box::new(StreamSampler::new(reader, false, None)?),
    })
}

pub(crate) fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidInput("cannot draw zero samples".into()));
    }
    Ok(())
}
