//! Versioned checkpoint container: named parameter tensors as raw 64-bit
//! little-endian values plus the architecture tag and the config hash.
//! Round-trips are bit-exact; writes are temp-then-rename so a killed run
//! never leaves a half-written file.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fusion::ExpertBank;
use crate::nets::ParamSet;
use crate::sac::{Arch, Policy, SacNets, Temperature};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"MELACKP1";
const VERSION: u32 = 1;

/// Named tensors with provenance. Entry names follow
/// `expert.<k>.<tensor>`, `gating.<tensor>`, `critic1.<tensor>`, ...,
/// `temperature.log_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Arch,
    pub config_hash: [u8; 32],
    pub entries: BTreeMap<String, Tensor>,
}

fn insert_param_set(entries: &mut BTreeMap<String, Tensor>, prefix: &str, p: &ParamSet) {
    for (name, t) in ParamSet::tensor_names().iter().zip(p.tensors()) {
        entries.insert(format!("{prefix}.{name}"), t.clone());
    }
}

fn extract_param_set(entries: &BTreeMap<String, Tensor>, prefix: &str) -> Result<ParamSet> {
    let get = |name: &str| -> Result<Tensor> {
        entries
            .get(&format!("{prefix}.{name}"))
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{prefix}.{name}`")))
    };
    let p = ParamSet {
        w0: get("w0")?,
        b0: get("b0")?,
        w1: get("w1")?,
        b1: get("b1")?,
        w2: get("w2")?,
        b2: get("b2")?,
    };
    if p.w0.shape().len() != 2
        || p.w1.shape().len() != 2
        || p.w2.shape().len() != 2
        || p.w0.shape()[1] != p.b0.numel()
        || p.w1.shape()[1] != p.b1.numel()
        || p.w2.shape()[1] != p.b2.numel()
        || p.w0.shape()[1] != p.w1.shape()[0]
        || p.w1.shape()[1] != p.w2.shape()[0]
    {
        return Err(Error::Checkpoint(format!(
            "inconsistent tensor shapes under `{prefix}`"
        )));
    }
    Ok(p)
}

impl Checkpoint {
    pub fn from_nets(nets: &SacNets, config_hash: [u8; 32]) -> Self {
        let mut entries = BTreeMap::new();
        match &nets.policy {
            Policy::Single(p) => insert_param_set(&mut entries, "expert.0", p),
            Policy::Fused(bank) | Policy::Blended(bank) => {
                for (k, e) in bank.experts.iter().enumerate() {
                    insert_param_set(&mut entries, &format!("expert.{k}"), e);
                }
                insert_param_set(&mut entries, "gating", &bank.gating);
            }
        }
        insert_param_set(&mut entries, "critic1", &nets.critic1);
        insert_param_set(&mut entries, "critic2", &nets.critic2);
        insert_param_set(&mut entries, "target1", &nets.target1);
        insert_param_set(&mut entries, "target2", &nets.target2);
        entries.insert(
            "temperature.log_alpha".to_string(),
            Tensor::scalar(nets.temperature.log_value()).expect("finite temperature"),
        );
        Checkpoint {
            arch: nets.policy.arch(),
            config_hash,
            entries,
        }
    }

    pub fn num_experts(&self) -> usize {
        self.entries
            .keys()
            .filter(|k| k.starts_with("expert.") && k.ends_with(".w0"))
            .count()
    }

    /// The single pretrained expert of a stage-1 checkpoint.
    pub fn single_expert(&self) -> Result<ParamSet> {
        if self.arch != Arch::Single {
            return Err(Error::Checkpoint(format!(
                "expected a single-expert checkpoint, found {}",
                self.arch.name()
            )));
        }
        extract_param_set(&self.entries, "expert.0")
    }

    /// The expert bank of a stage-2 checkpoint.
    pub fn bank(&self) -> Result<ExpertBank> {
        if self.arch == Arch::Single {
            return Err(Error::Checkpoint(
                "single-expert checkpoint holds no expert bank".to_string(),
            ));
        }
        let n = self.num_experts();
        let experts = (0..n)
            .map(|k| extract_param_set(&self.entries, &format!("expert.{k}")))
            .collect::<Result<Vec<_>>>()?;
        let gating = extract_param_set(&self.entries, "gating")?;
        ExpertBank::new(experts, gating)
    }

    pub fn to_nets(&self) -> Result<SacNets> {
        let policy = match self.arch {
            Arch::Single => Policy::Single(self.single_expert()?),
            Arch::Mela => Policy::Fused(self.bank()?),
            Arch::Moe => Policy::Blended(self.bank()?),
        };
        let log_alpha = self
            .entries
            .get("temperature.log_alpha")
            .ok_or_else(|| Error::Checkpoint("missing entry `temperature.log_alpha`".into()))?
            .data()[0];
        Ok(SacNets {
            policy,
            critic1: extract_param_set(&self.entries, "critic1")?,
            critic2: extract_param_set(&self.entries, "critic2")?,
            target1: extract_param_set(&self.entries, "target1")?,
            target2: extract_param_set(&self.entries, "target2")?,
            temperature: Temperature::from_log(log_alpha),
        })
    }

    pub fn policy(&self) -> Result<Policy> {
        Ok(self.to_nets()?.policy)
    }

    // ── serialization ───────────────────────────────────────────────────

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.arch {
            Arch::Single => 0,
            Arch::Mela => 1,
            Arch::Moe => 2,
        });
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let bad = |what: &str| Error::Checkpoint(format!("corrupt checkpoint: {what}"));
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(bad(what));
            }
            let (head, tail) = cursor.split_at(n);
            cursor = tail;
            Ok(head)
        };
        if take(8, "magic")? != MAGIC {
            return Err(bad("magic bytes"));
        }
        let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let arch = match take(1, "arch tag")?[0] {
            0 => Arch::Single,
            1 => Arch::Mela,
            2 => Arch::Moe,
            other => return Err(Error::Checkpoint(format!("unknown arch tag {other}"))),
        };
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(take(32, "config hash")?);
        let n = u32::from_le_bytes(take(4, "entry count")?.try_into().unwrap()) as usize;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let name_len = u32::from_le_bytes(take(4, "name length")?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(name_len, "entry name")?.to_vec())
                .map_err(|_| bad("entry name utf-8"))?;
            let ndims = u32::from_le_bytes(take(4, "rank")?.try_into().unwrap()) as usize;
            if ndims > 4 {
                return Err(Error::Checkpoint(format!("entry `{name}`: rank {ndims} too large")));
            }
            let mut shape = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                shape.push(u32::from_le_bytes(take(4, "dimension")?.try_into().unwrap()) as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = take(numel * 8, "tensor data")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::Checkpoint(format!("entry `{name}`: {e}")))?;
            entries.insert(name, tensor);
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            arch,
            config_hash,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("open {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Write-temp-then-rename within the destination directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".to_string())
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::init_stage2;
    use crate::nets::MlpSpec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_nets(arch: Arch, seed: u64) -> SacNets {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let espec = MlpSpec::new(5, 6, 4).unwrap();
        let critic = MlpSpec::new(7, 6, 1).unwrap();
        let policy = match arch {
            Arch::Single => Policy::Single(ParamSet::init_he_uniform(espec, &mut rng)),
            _ => {
                let a = ParamSet::init_he_uniform(espec, &mut rng);
                let b = ParamSet::init_he_uniform(espec, &mut rng);
                let bank = init_stage2(&a, &b, 4, MlpSpec::new(3, 4, 4).unwrap(), &mut rng).unwrap();
                if arch == Arch::Mela {
                    Policy::Fused(bank)
                } else {
                    Policy::Blended(bank)
                }
            }
        };
        SacNets::new(
            policy,
            ParamSet::init_he_uniform(critic, &mut rng),
            ParamSet::init_he_uniform(critic, &mut rng),
            Temperature::new(0.37).unwrap(),
        )
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_arch() {
        for arch in [Arch::Single, Arch::Mela, Arch::Moe] {
            let nets = sample_nets(arch, 7);
            let ck = Checkpoint::from_nets(&nets, [9u8; 32]);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            assert_eq!(ck, back);
            let nets2 = back.to_nets().unwrap();
            assert_eq!(nets.critic1, nets2.critic1);
            assert_eq!(nets.temperature.log_value(), nets2.temperature.log_value());
            match (&nets.policy, &nets2.policy) {
                (Policy::Single(a), Policy::Single(b)) => assert_eq!(a, b),
                (Policy::Fused(a), Policy::Fused(b)) => {
                    assert_eq!(a.experts, b.experts);
                    assert_eq!(a.gating, b.gating);
                }
                (Policy::Blended(a), Policy::Blended(b)) => assert_eq!(a.experts, b.experts),
                _ => panic!("arch changed in round trip"),
            }
        }
    }

    #[test]
    fn save_and_load_through_the_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nets.ckpt");
        let nets = sample_nets(Arch::Mela, 3);
        let ck = Checkpoint::from_nets(&nets, [1u8; 32]);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ck, back);
        // No temp file left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corrupt_files_are_diagnosed() {
        let nets = sample_nets(Arch::Single, 1);
        let ck = Checkpoint::from_nets(&nets, [0u8; 32]);
        let mut bytes = ck.to_bytes();

        let err = Checkpoint::from_bytes(&bytes[..20]).unwrap_err().to_string();
        assert!(err.contains("corrupt"), "{err}");

        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn single_checkpoint_refuses_bank_access_and_vice_versa() {
        let single = Checkpoint::from_nets(&sample_nets(Arch::Single, 2), [0u8; 32]);
        assert!(single.bank().is_err());
        assert!(single.single_expert().is_ok());

        let mela = Checkpoint::from_nets(&sample_nets(Arch::Mela, 2), [0u8; 32]);
        assert!(mela.single_expert().is_err());
        assert_eq!(mela.num_experts(), 4);
        assert!(mela.bank().is_ok());
    }

    #[test]
    fn missing_entry_is_named() {
        let nets = sample_nets(Arch::Single, 4);
        let mut ck = Checkpoint::from_nets(&nets, [0u8; 32]);
        ck.entries.remove("critic1.w1");
        let err = ck.to_nets().unwrap_err().to_string();
        assert!(err.contains("critic1.w1"), "{err}");
    }

    proptest! {
        #[test]
        fn arbitrary_tensors_round_trip_bitwise(
            vals in proptest::collection::vec(-1e12f64..1e12, 1..64),
            rows in 1usize..8,
        ) {
            let cols = vals.len();
            let mut data = Vec::new();
            for _ in 0..rows { data.extend_from_slice(&vals); }
            let mut entries = BTreeMap::new();
            entries.insert("x".to_string(), Tensor::matrix(rows, cols, data).unwrap());
            let ck = Checkpoint { arch: Arch::Single, config_hash: [3u8; 32], entries };
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let a = ck.entries["x"].data();
            let b = back.entries["x"].data();
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
