//! Exact integer linear algebra on small coefficient matrices.
//!
//! Everything here runs fraction-free (Bareiss elimination) over `i128`, so
//! singularity decisions never depend on floating point. Coefficient vectors
//! in this crate have a handful of entries of small magnitude; by Hadamard's
//! bound every intermediate minor fits comfortably in 128 bits.

/// Greatest common divisor of the absolute values of `values`; zero for an
/// all-zero slice.
pub fn gcd_of(values: &[i64]) -> u64 {
    values.iter().fold(0u64, |acc, &v| gcd(acc, v.unsigned_abs()))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Determinant of a square matrix given as a list of columns.
///
/// Panics if the columns do not form a square matrix.
pub fn determinant(columns: &[&[i64]]) -> i128 {
    let n = columns.len();
    if n == 0 {
        return 1;
    }
    assert!(
        columns.iter().all(|c| c.len() == n),
        "determinant requires a square matrix"
    );
    // Work on the transpose; det(A^T) = det(A).
    let mut m: Vec<Vec<i128>> = columns
        .iter()
        .map(|c| c.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[k][k] * m[i][j] - m[i][k] * m[k][j]) / prev;
            }
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// Rank of the matrix whose columns (or rows; rank is symmetric) are `vectors`.
pub fn rank(vectors: &[&[i64]]) -> usize {
    let Some(first) = vectors.first() else {
        return 0;
    };
    let cols = first.len();
    let mut m: Vec<Vec<i128>> = vectors
        .iter()
        .map(|v| {
            assert_eq!(v.len(), cols, "rank requires vectors of equal length");
            v.iter().map(|&x| x as i128).collect()
        })
        .collect();
    let rows = m.len();
    let mut r = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..rows {
            for j in c + 1..cols {
                m[i][j] = (m[r][c] * m[i][j] - m[i][c] * m[r][j]) / prev;
            }
            m[i][c] = 0;
        }
        prev = m[r][c];
        r += 1;
    }
    r
}

/// True when the vectors are linearly independent over the rationals.
pub fn independent(vectors: &[&[i64]]) -> bool {
    rank(vectors) == vectors.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcd_basics() {
        assert_eq!(gcd_of(&[2, -4, 6]), 2);
        assert_eq!(gcd_of(&[0, 0, -3]), 3);
        assert_eq!(gcd_of(&[1, 1, 0, -1]), 1);
        assert_eq!(gcd_of(&[0, 0]), 0);
    }

    #[test]
    fn small_determinants() {
        assert_eq!(determinant(&[&[1, 0], &[0, 1]]), 1);
        assert_eq!(determinant(&[&[0, 1], &[1, 0]]), -1);
        assert_eq!(determinant(&[&[1, 0], &[2, 0]]), 0);
        // columns (2,1,0), (1,3,1), (0,1,4): det = 2*(12-1) - 1*(4-0) = 18
        assert_eq!(determinant(&[&[2, 1, 0], &[1, 3, 1], &[0, 1, 4]]), 18);
    }

    #[test]
    fn rank_of_rectangular_sets() {
        assert_eq!(rank(&[&[1, 1, -1, -1], &[1, 1, 0, 0], &[2, 2, -1, -1]]), 2);
        assert_eq!(rank(&[&[0, 0, 0]]), 0);
        assert_eq!(rank(&[&[1, 2], &[2, 4], &[0, 1]]), 2);
        assert!(independent(&[&[1, 0, 0], &[0, 0, 1]]));
        assert!(!independent(&[&[1, -1], &[-2, 2]]));
    }
}
