//! Named, ordered parameter storage shared by the optimizer and the
//! checkpoint format. Registration order is the canonical order: gradients,
//! Adam state, and serialized tensors all align to it.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamRef(pub(crate) usize);

impl ParamRef {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Normal(0, sqrt(2 / fan_in)); the ReLU-family default.
    HeNormal { fan_in: usize },
    /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    XavierUniform { fan_in: usize, fan_out: usize },
}

/// Identity token distinguishing stores bound in the same graph. Clones
/// keep the id: a snapshot is logically the same parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreId(u64);

#[derive(Debug, Clone)]
pub struct ParamStore {
    id: StoreId,
    params: Vec<Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        use std::sync::atomic::{AtomicU64, Ordering};
        static NEXT: AtomicU64 = AtomicU64::new(0);
        Self {
            id: StoreId(NEXT.fetch_add(1, Ordering::Relaxed)),
            params: Vec::new(),
        }
    }

    pub fn id(&self) -> StoreId {
        self.id
    }

    pub fn register(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut ChaCha20Rng,
    ) -> ParamRef {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name:?}"
        );
        let len: usize = shape.iter().product();
        assert!(len > 0, "parameter {name:?} has empty shape");
        let data = match init {
            Init::Zeros => vec![0.0; len],
            Init::Constant(c) => vec![c; len],
            Init::HeNormal { fan_in } => {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                (0..len).map(|_| normal.sample(rng)).collect()
            }
            Init::XavierUniform { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| rng.gen_range(-a..a)).collect()
            }
        };
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        ParamRef(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn get(&self, r: ParamRef) -> &Param {
        &self.params[r.0]
    }

    pub fn get_mut(&mut self, r: ParamRef) -> &mut Param {
        &mut self.params[r.0]
    }

    pub fn by_name(&self, name: &str) -> Option<(ParamRef, &Param)> {
        self.params
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
            .map(|(i, p)| (ParamRef(i), p))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamRef, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamRef(i), p))
    }

    /// Copies values from `other`, matched by name; shapes must agree.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            let (_, src) = other
                .by_name(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {:?}", p.name)))?;
            if src.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?} has shape {:?}, expected {:?}",
                    p.name, src.shape, p.shape
                )));
            }
            p.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn registration_is_ordered_and_named() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let a = store.register("w", &[2, 3], Init::HeNormal { fan_in: 3 }, &mut rng);
        let b = store.register("b", &[3], Init::Zeros, &mut rng);
        assert_eq!(a.index(), 0);
        assert_eq!(b.index(), 1);
        assert_eq!(store.get(b).data, vec![0.0; 3]);
        assert_eq!(store.scalar_count(), 9);
        assert_eq!(store.by_name("w").unwrap().0, a);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let mk = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut s = ParamStore::new();
            s.register("w", &[4, 4], Init::XavierUniform { fan_in: 4, fan_out: 4 }, &mut rng);
            s.get(ParamRef(0)).data.clone()
        };
        assert_eq!(mk(7), mk(7));
        assert_ne!(mk(7), mk(8));
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_panic() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        store.register("w", &[1], Init::Zeros, &mut rng);
        store.register("w", &[1], Init::Zeros, &mut rng);
    }

    #[test]
    fn load_from_matches_by_name() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut a = ParamStore::new();
        a.register("x", &[2], Init::Zeros, &mut rng);
        let mut b = ParamStore::new();
        b.register("x", &[2], Init::Constant(5.0), &mut rng);
        a.load_from(&b).unwrap();
        assert_eq!(a.get(ParamRef(0)).data, vec![5.0, 5.0]);

        let mut c = ParamStore::new();
        c.register("y", &[2], Init::Zeros, &mut rng);
        assert!(a.load_from(&c).is_err());
    }
}
