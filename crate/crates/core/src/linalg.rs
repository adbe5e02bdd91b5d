//! Thin wrappers over the LAPACK routines the crate needs.

use std::os::raw::c_char;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ShapeBuilder};

use crate::error::{Error, Result};

/// Checks the linked BLAS/LAPACK against naive arithmetic once per process.
///
/// Some OpenBLAS builds pick a faulty kernel for the host CPU and return
/// silently wrong products; selecting another kernel through the
/// `OPENBLAS_CORETYPE` environment variable (e.g. `Haswell`) avoids it.
pub fn blas_self_check() -> Result<()> {
    static CHECK: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    CHECK.get_or_init(run_self_check).clone().map_err(Error::Backend)
}

fn run_self_check() -> std::result::Result<(), String> {
    let (m, k, n) = (120, 90, 70);
    let mut seed = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = Array2::from_shape_fn((m, k), |_| next());
    let b = Array2::from_shape_fn((k, n), |_| next());
    let c = a.dot(&b);
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let r: f64 = (0..k).map(|l| a[[i, l]] * b[[l, j]]).sum();
            worst = worst.max((r - c[[i, j]]).abs());
        }
    }
    if worst > 1e-10 {
        return Err(format!(
            "matrix product off by {worst:e}; set OPENBLAS_CORETYPE (e.g. Haswell) to select a working kernel"
        ));
    }
    let s = &a.t().dot(&a);
    let (_, v) = eigen_unchecked(s.clone()).map_err(|e| e.to_string())?;
    let g = v.t().dot(&v);
    let mut off = 0.0f64;
    for ((i, j), x) in g.indexed_iter() {
        off = off.max((x - f64::from(u8::from(i == j))).abs());
    }
    if off > 1e-10 {
        return Err(format!(
            "eigenvectors not orthonormal (error {off:e}); set OPENBLAS_CORETYPE (e.g. Haswell) to select a working kernel"
        ));
    }
    Ok(())
}

/// Full eigendecomposition of a real symmetric matrix (divide and conquer).
///
/// Returns ascending eigenvalues and the eigenvectors as columns. Only the
/// lower triangle of `a` is referenced.
pub fn symmetric_eigen(a: Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    blas_self_check()?;
    eigen_unchecked(a)
}

fn eigen_unchecked(a: Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    // a symmetric matrix reads the same in either storage order
    let mut buf = if a.is_standard_layout() {
        a.into_raw_vec_and_offset().0
    } else {
        a.t().as_standard_layout().to_owned().into_raw_vec_and_offset().0
    };
    let ni = i32::try_from(n).map_err(|_| Error::InvalidParameter("matrix too large".into()))?;
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let mut w = vec![0.0; n];
    let mut info = 0;
    let mut work_query = 0.0;
    let mut iwork_query = 0;
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            &mut work_query,
            &-1,
            &mut iwork_query,
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd (workspace query)",
            info,
            dim: n,
        });
    }
    let lwork = work_query as i32;
    let liwork = iwork_query;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd",
            info,
            dim: n,
        });
    }
    let vectors = Array2::from_shape_vec((n, n).f(), buf).expect("buffer has n*n entries");
    Ok((w, vectors))
}

/// Minimizes `|A c - b|_2` for a tall, full-rank `A` via QR.
pub fn least_squares(a: &Array2<f64>, b: &[f64]) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    assert_eq!(m, b.len(), "right-hand side length");
    assert!(m >= n, "least squares needs at least as many rows as unknowns");
    let mut af: Vec<f64> = a.t().iter().copied().collect(); // column-major
    let mut bf = b.to_vec();
    let (mi, ni) = (m as i32, n as i32);
    let trans = b'N' as c_char;
    let mut info = 0;
    let mut query = 0.0;
    unsafe {
        lapack_sys::dgels_(
            &trans,
            &mi,
            &ni,
            &1,
            af.as_mut_ptr(),
            &mi,
            bf.as_mut_ptr(),
            &mi,
            &mut query,
            &-1,
            &mut info,
            1,
        );
    }
    let lwork = (query as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack_sys::dgels_(
            &trans,
            &mi,
            &ni,
            &1,
            af.as_mut_ptr(),
            &mi,
            bf.as_mut_ptr(),
            &mi,
            work.as_mut_ptr(),
            &lwork,
            &mut info,
            1,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgels",
            info,
            dim: n,
        });
    }
    bf.truncate(n);
    Ok(Array1::from(bf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_small_matrix() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (w, v) = symmetric_eigen(a.clone()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 3.0).abs() < 1e-14);
        let recon = v.dot(&Array2::from_diag(&Array1::from(w))).dot(&v.t());
        for (x, y) in recon.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn backend_passes_self_check() {
        blas_self_check().unwrap();
    }

    #[test]
    fn line_fit() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let c = least_squares(&a, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
    }
}
