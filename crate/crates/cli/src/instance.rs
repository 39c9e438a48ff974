//! Problem instances generated from a run configuration.

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use sol_landing::linalg::haar_stiefel;
use sol_landing::problems::io::to_bytes;
use sol_landing::problems::{synth_ica, synth_pca, synth_procrustes, AnyProblem, Ica, Pca, Procrustes};
use sol_landing::AmbientPoint;

use crate::config::{ProblemSpec, RunConfig};

/// Keeps the starting-point stream apart from the data stream of the same
/// seed.
const START_SALT: u64 = 0x5f3a_91c2_d4e7_0b68;

pub struct Instance {
    pub problem: AnyProblem,
    pub spec: ProblemSpec,
    /// Hex SHA-256 over the problem kind, its dimensions and the data bytes.
    pub hash: String,
}

impl Instance {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let spec = cfg.problem_spec()?;
        let mut hasher = Sha256::new();
        hasher.update(cfg.problem.name().as_bytes());
        let problem = match spec {
            ProblemSpec::Procrustes { n, d, sigma } => {
                let (data, _) = synth_procrustes(n, d, sigma, cfg.seed)?;
                hasher.update(to_bytes(&data.a));
                hasher.update(to_bytes(&data.b));
                AnyProblem::Procrustes(Procrustes::new(data)?)
            }
            ProblemSpec::Pca { samples, n, p, sigma } => {
                let data = synth_pca(samples, n, p, sigma, cfg.seed)?;
                hasher.update((p as u64).to_le_bytes());
                hasher.update(to_bytes(&data.a));
                AnyProblem::Pca(Pca::new(data)?)
            }
            ProblemSpec::Ica { samples, d, p } => {
                let data = synth_ica(samples, d, cfg.seed)?;
                hasher.update((p as u64).to_le_bytes());
                hasher.update(to_bytes(&data.w));
                AnyProblem::Ica(Ica::with_components(data, p)?.with_execution(cfg.execution))
            }
        };
        Ok(Self {
            problem,
            spec,
            hash: hex::encode(hasher.finalize()),
        })
    }

    /// Haar-distributed starting point on the Stiefel manifold.
    pub fn start(&self, seed: u64) -> Result<AmbientPoint> {
        use sol_landing::Problem;
        let (n, p) = self.problem.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ START_SALT);
        Ok(AmbientPoint::new(haar_stiefel(&mut rng, n, p))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProblemKind;
    use sol_landing::Problem;

    fn small(problem: ProblemKind) -> RunConfig {
        let mut cfg = RunConfig {
            problem,
            ..RunConfig::default()
        };
        match problem {
            ProblemKind::Procrustes => {
                cfg.n = Some(12);
                cfg.d = Some(3);
            }
            ProblemKind::Pca => {
                cfg.samples = Some(30);
                cfg.n = Some(8);
                cfg.p = Some(2);
            }
            ProblemKind::Ica => {
                cfg.samples = Some(200);
                cfg.d = Some(4);
                cfg.p = Some(2);
            }
        }
        cfg
    }

    #[test]
    fn dimensions_follow_the_config() {
        let dims = |k| Instance::generate(&small(k)).unwrap().problem.dims();
        assert_eq!(dims(ProblemKind::Procrustes), (3, 3));
        assert_eq!(dims(ProblemKind::Pca), (8, 2));
        assert_eq!(dims(ProblemKind::Ica), (4, 2));
    }

    #[test]
    fn hash_depends_on_seed_and_kind_only_through_data() {
        let a = Instance::generate(&small(ProblemKind::Procrustes)).unwrap();
        let b = Instance::generate(&RunConfig {
            variant: sol_landing::Variant::FirstOrder,
            eps: 0.5,
            ..small(ProblemKind::Procrustes)
        })
        .unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
        let c = Instance::generate(&RunConfig {
            seed: 2,
            ..small(ProblemKind::Procrustes)
        })
        .unwrap();
        assert_ne!(a.hash, c.hash);
        let d = Instance::generate(&RunConfig {
            p: Some(3),
            ..small(ProblemKind::Ica)
        })
        .unwrap();
        assert_ne!(Instance::generate(&small(ProblemKind::Ica)).unwrap().hash, d.hash);
    }

    #[test]
    fn start_is_on_the_manifold_and_reproducible() {
        let inst = Instance::generate(&small(ProblemKind::Pca)).unwrap();
        let x = inst.start(1).unwrap();
        assert!(x.feasibility() < 1e-12);
        assert_eq!(x.matrix(), inst.start(1).unwrap().matrix());
        assert_ne!(x.matrix(), inst.start(2).unwrap().matrix());
    }
}
