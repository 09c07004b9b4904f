//! Sparse voxel store whose entries expire a fixed time after their last observation.

use std::collections::HashMap;

use super::CostmapError;

pub type VoxelKey = (i32, i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObserveStats {
    pub inserted: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TemporalVoxelStore {
    voxel_size: f64,
    decay: f64,
    expiry: HashMap<VoxelKey, f64>,
}

impl TemporalVoxelStore {
    pub fn new(voxel_size: f64, decay: f64) -> Result<Self, CostmapError> {
        if !(voxel_size > 0.0) || !(decay > 0.0) {
            return Err(CostmapError::InvalidParams(format!(
                "voxel size ({voxel_size}) and decay ({decay}) must be > 0"
            )));
        }
        Ok(Self { voxel_size, decay, expiry: HashMap::new() })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn decay_duration(&self) -> f64 {
        self.decay
    }

    pub fn key_of(&self, p: [f64; 3]) -> VoxelKey {
        let s = self.voxel_size;
        ((p[0] / s).floor() as i32, (p[1] / s).floor() as i32, (p[2] / s).floor() as i32)
    }

    pub fn center_of(&self, k: VoxelKey) -> [f64; 3] {
        let s = self.voxel_size;
        [(k.0 as f64 + 0.5) * s, (k.1 as f64 + 0.5) * s, (k.2 as f64 + 0.5) * s]
    }

    /// Marks each point's voxel as seen at `now`. Non-finite points are skipped.
    pub fn observe(&mut self, points: &[[f64; 3]], now: f64) -> ObserveStats {
        let mut stats = ObserveStats::default();
        let expiry = now + self.decay;
        for p in points {
            if !p.iter().all(|v| v.is_finite()) {
                stats.skipped += 1;
                continue;
            }
            let k = self.key_of(*p);
            self.expiry.insert(k, expiry);
            stats.inserted += 1;
        }
        stats
    }

    /// Drops every voxel whose expiry is at or before `now`.
    pub fn decay(&mut self, now: f64) -> usize {
        let before = self.expiry.len();
        self.expiry.retain(|_, e| *e > now);
        before - self.expiry.len()
    }

    pub fn expiry_of(&self, k: VoxelKey) -> Option<f64> {
        self.expiry.get(&k).copied()
    }

    pub fn contains(&self, k: VoxelKey) -> bool {
        self.expiry.contains_key(&k)
    }

    pub fn len(&self) -> usize {
        self.expiry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expiry.is_empty()
    }

    pub fn clear(&mut self) {
        self.expiry.clear();
    }

    pub fn keys(&self) -> impl Iterator<Item = VoxelKey> + '_ {
        self.expiry.keys().copied()
    }
}
