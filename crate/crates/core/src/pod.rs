//! Snapshot-method proper orthogonal decomposition.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{inner_product_unchecked, Grid, VectorField};
use crate::io::FileFormat;
use crate::linalg::symmetric_eigen_desc;
use crate::par;
use crate::record::Record;
use crate::snapshot::SnapshotSet;

/// Eigenvalues below this fraction of the largest are null space.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Orthonormal empirical modes with their eigenvalues and the snapshot
/// expansion coefficients `Φ^k = Σ_i b_i^k (U^(i) − ū)`.
#[derive(Debug, Clone)]
pub struct PodBasis {
    modes: Vec<VectorField>,
    eigenvalues: Vec<f64>,
    snapshot_coeffs: DMatrix<f64>,
    reference: VectorField,
}

/// Matrix of `ip(U^(j) − ū, U^(l) − ū)`.
pub fn correlation_matrix(set: &SnapshotSet) -> Result<DMatrix<f64>> {
    let fl = set.fluctuations()?;
    Ok(gram(&fl))
}

fn gram(fields: &[VectorField]) -> DMatrix<f64> {
    let n = fields.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |l| (j, l))).collect();
    let vals = par::map_range(pairs.len(), |p| {
        let (j, l) = pairs[p];
        inner_product_unchecked(&fields[j], &fields[l])
    });
    let mut c = DMatrix::zeros(n, n);
    for (&(j, l), v) in pairs.iter().zip(vals) {
        c[(j, l)] = v;
        c[(l, j)] = v;
    }
    c
}

/// Linear combination `Σ_i coeffs_i fields_i`.
fn combine(grid: &Arc<Grid>, fields: &[VectorField], coeffs: &[f64]) -> VectorField {
    let nc = grid.n_axes();
    let np = grid.n_points();
    let comps = par::map_range(nc, |c| {
        let mut out = vec![0.0; np];
        for (f, &a) in fields.iter().zip(coeffs) {
            if a != 0.0 {
                for (o, v) in out.iter_mut().zip(f.component(c)) {
                    *o += a * v;
                }
            }
        }
        out
    });
    VectorField::new(grid.clone(), comps).expect("shapes match by construction")
}

/// Full POD: eigen-decomposes the correlation matrix and builds the leading
/// `n_retained` modes.
pub fn compute_pod(set: &SnapshotSet, n_retained: usize) -> Result<PodBasis> {
    let fl = set.fluctuations()?;
    let corr = gram(&fl);
    let (vals, vecs) = symmetric_eigen_desc(&corr);
    let lmax = vals[0];
    let rank = if lmax > 0.0 {
        vals.iter().filter(|&&l| l > RANK_TOLERANCE * lmax).count()
    } else {
        0
    };
    if n_retained == 0 || n_retained > rank {
        return Err(Error::Rank {
            requested: n_retained,
            rank,
        });
    }
    let n = set.len();
    let mut b = DMatrix::zeros(n, n_retained);
    for k in 0..n_retained {
        let mut v: DVector<f64> = vecs.column(k).into_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        b.set_column(k, &(v / vals[k].sqrt()));
    }
    let grid = set.grid().clone();
    let mut modes: Vec<VectorField> = par::map_range(n_retained, |k| {
        let coeffs: Vec<f64> = b.column(k).iter().copied().collect();
        combine(&grid, &fl, &coeffs)
    });
    // One modified Gram–Schmidt pass to clean up round-off; b follows.
    for k in 0..n_retained {
        for j in 0..k {
            let p = inner_product_unchecked(&modes[k], &modes[j]);
            let (head, tail) = modes.split_at_mut(k);
            tail[0].axpy(-p, &head[j])?;
            let bj: DVector<f64> = b.column(j).into_owned();
            let mut bk = b.column_mut(k);
            bk.axpy(-p, &bj, 1.0);
        }
        let nrm = inner_product_unchecked(&modes[k], &modes[k]).sqrt();
        if !(nrm > 0.0) {
            return Err(Error::Orthonormalization { mode: k + 1 });
        }
        modes[k].scale(1.0 / nrm);
        b.column_mut(k).scale_mut(1.0 / nrm);
    }
    Ok(PodBasis {
        modes,
        eigenvalues: vals,
        snapshot_coeffs: b,
        reference: set.reference().clone(),
    })
}

impl PodBasis {
    /// Assembles a basis from given parts. Modes must share the reference's
    /// grid; `eigenvalues` may hold more entries than modes (full spectrum).
    pub fn from_parts(
        modes: Vec<VectorField>,
        eigenvalues: Vec<f64>,
        snapshot_coeffs: DMatrix<f64>,
        reference: VectorField,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("basis needs at least one mode"));
        }
        for m in &modes {
            reference.grid().check_same(m.grid())?;
        }
        if eigenvalues.len() < modes.len() {
            return Err(Error::invalid("fewer eigenvalues than modes"));
        }
        if snapshot_coeffs.ncols() != modes.len() {
            return Err(Error::invalid("snapshot coefficient columns must match mode count"));
        }
        Ok(PodBasis {
            modes,
            eigenvalues,
            snapshot_coeffs,
            reference,
        })
    }

    pub fn n_retained(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[VectorField] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> &VectorField {
        &self.modes[k]
    }

    /// Eigenvalues of the retained modes.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.modes.len()]
    }

    /// All eigenvalues of the correlation matrix, non-increasing.
    pub fn spectrum(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn snapshot_coeffs(&self) -> &DMatrix<f64> {
        &self.snapshot_coeffs
    }

    /// Modal coefficients of the snapshots, `a_k(t_i) = λ_k b_i^k`.
    pub fn modal_coefficients(&self) -> DMatrix<f64> {
        let mut a = self.snapshot_coeffs.clone();
        for (k, mut col) in a.column_iter_mut().enumerate() {
            col *= self.eigenvalues[k];
        }
        a
    }

    pub fn reference(&self) -> &VectorField {
        &self.reference
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.reference.grid()
    }

    /// Keeps the leading `n` modes.
    pub fn truncated(&self, n: usize) -> Result<PodBasis> {
        if n == 0 || n > self.modes.len() {
            return Err(Error::Rank {
                requested: n,
                rank: self.modes.len(),
            });
        }
        Ok(PodBasis {
            modes: self.modes[..n].to_vec(),
            eigenvalues: self.eigenvalues.clone(),
            snapshot_coeffs: self.snapshot_coeffs.columns(0, n).into_owned(),
            reference: self.reference.clone(),
        })
    }

    /// Coefficients `a_r = ip(field − ū, Φ^r)`.
    pub fn project(&self, field: &VectorField) -> Result<DVector<f64>> {
        let fl = field.sub(&self.reference)?;
        Ok(DVector::from_vec(
            self.modes.iter().map(|m| inner_product_unchecked(&fl, m)).collect(),
        ))
    }

    /// Field `ū + Σ_i a_i Φ^i`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<VectorField> {
        if coeffs.len() != self.modes.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                self.modes.len()
            )));
        }
        let mut f = combine(self.grid(), &self.modes, coeffs);
        f.axpy(1.0, &self.reference)?;
        Ok(f)
    }

    /// Largest deviation of the mode Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = gram(&self.modes);
        (g - DMatrix::identity(self.modes.len(), self.modes.len())).amax()
    }

    /// Writes the modes as a snapshot file (mode index as time, ū as the
    /// reference) and the eigenvalues and `b_i^k` to a sidecar record.
    pub fn save(&self, modes_path: &Path, sidecar_path: &Path, format: FileFormat, comment: &str) -> Result<()> {
        let idx: Vec<f64> = (1..=self.modes.len()).map(|k| k as f64).collect();
        if self.modes.len() == 1 {
            // Snapshot files need two entries; pad with ū at index 0.
            let set = SnapshotSet::new(
                vec![0.0, 1.0],
                vec![VectorField::zeros(self.grid().clone()), self.modes[0].clone()],
                Some(self.reference.clone()),
            )?;
            set.save(modes_path, format, comment)?;
        } else {
            let set = SnapshotSet::new(idx, self.modes.clone(), Some(self.reference.clone()))?;
            set.save(modes_path, format, comment)?;
        }
        let mut rec = Record::new("pod-basis");
        rec.push_scalar("n_retained", self.modes.len() as f64)
            .push_vector("eigenvalues", &self.eigenvalues)
            .push_matrix("snapshot_coeffs", &self.snapshot_coeffs);
        rec.save(sidecar_path, format, comment)
    }

    pub fn load(modes_path: &Path, sidecar_path: &Path, format: FileFormat) -> Result<Self> {
        let set = SnapshotSet::load(modes_path, format)?;
        let rec = Record::load(sidecar_path, format)?;
        rec.expect_kind("pod-basis")?;
        let n = rec.scalar("n_retained")? as usize;
        let modes: Vec<VectorField> = if n == 1 {
            vec![set.fields()[1].clone()]
        } else {
            set.fields().to_vec()
        };
        if modes.len() != n {
            return Err(Error::invalid(format!(
                "sidecar declares {n} modes, mode file holds {}",
                modes.len()
            )));
        }
        Self::from_parts(
            modes,
            rec.vector("eigenvalues")?.iter().copied().collect(),
            rec.matrix("snapshot_coeffs")?,
            set.reference().clone(),
        )
    }
}

/// Projection of a field onto a basis followed by reconstruction.
pub fn project_reconstruct(basis: &PodBasis, field: &VectorField) -> Result<VectorField> {
    let a = basis.project(field)?;
    basis.reconstruct(a.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_product;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(&[n, n], &[(0.0, 1.0), (0.0, 1.0)]).unwrap())
    }

    #[test]
    fn antisymmetric_pair() {
        let g = grid(8);
        let ubar = VectorField::from_fn(g.clone(), |x| vec![x[0], 1.0]);
        let u = VectorField::from_fn(g.clone(), |x| vec![x[0] + x[1], 1.0 - x[0] * x[1]]);
        let v = ubar.scaled(2.0).sub(&u).unwrap();
        let set = SnapshotSet::new(vec![0.0, 1.0], vec![u.clone(), v], Some(ubar.clone())).unwrap();
        let c = correlation_matrix(&set).unwrap();
        let d = u.sub(&ubar).unwrap();
        let cc = inner_product(&d, &d).unwrap();
        assert!((c[(0, 0)] - cc).abs() < 1e-14);
        assert!((c[(0, 1)] + cc).abs() < 1e-14);
    }

    #[test]
    fn identical_snapshots_have_zero_rank() {
        let g = grid(6);
        let u = VectorField::from_fn(g, |x| vec![x[0], x[1]]);
        let set = SnapshotSet::new(vec![0.0, 1.0, 2.0, 3.0], vec![u.clone(), u.clone(), u.clone(), u], None).unwrap();
        assert!(correlation_matrix(&set).unwrap().amax() == 0.0);
        assert!(matches!(compute_pod(&set, 1), Err(Error::Rank { rank: 0, .. })));
    }

    #[test]
    fn project_and_reconstruct_unit() {
        let g = grid(10);
        let fields: Vec<VectorField> = (0..5)
            .map(|i| {
                let t = i as f64;
                VectorField::from_fn(g.clone(), move |x| {
                    vec![(t + x[0]).sin(), (t * x[1]).cos() + x[0] * t * t]
                })
            })
            .collect();
        let set = SnapshotSet::new((0..5).map(|i| i as f64).collect(), fields, None).unwrap();
        let b = compute_pod(&set, 3).unwrap();
        assert!(b.orthonormality_defect() < 1e-10);
        let z = b.project(b.reference()).unwrap();
        assert!(z.amax() == 0.0);
        let f = b.reconstruct(&[0.0, 3.0, 0.0]).unwrap();
        let a = b.project(&f).unwrap();
        assert!((a[1] - 3.0).abs() < 1e-12 && a[0].abs() < 1e-12 && a[2].abs() < 1e-12);
        let e = b.reconstruct(&[0.0, 0.0, 1.0]).unwrap().sub(b.reference()).unwrap();
        assert!(e.sub(b.mode(2)).unwrap().norm_squared() < 1e-28);
    }

    #[test]
    fn save_load_round_trip() {
        let g = grid(5);
        let fields: Vec<VectorField> = (0..4)
            .map(|i| VectorField::from_fn(g.clone(), move |x| vec![x[0] * i as f64, (x[1] + i as f64).sin()]))
            .collect();
        let set = SnapshotSet::new(vec![0.0, 1.0, 2.0, 3.0], fields, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for n in [1, 2] {
            let b = compute_pod(&set, n).unwrap();
            let (m, s) = (dir.path().join("m"), dir.path().join("s"));
            b.save(&m, &s, FileFormat::RawBinary, "").unwrap();
            let l = PodBasis::load(&m, &s, FileFormat::RawBinary).unwrap();
            assert_eq!(l.modes(), b.modes());
            assert_eq!(l.spectrum(), b.spectrum());
        }
    }
}
