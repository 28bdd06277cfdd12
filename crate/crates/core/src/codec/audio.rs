use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Role, TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

pub const DEFAULT_N_CODES: usize = 1024;
pub const DEFAULT_DIM: usize = 16;
pub const DEFAULT_CODEBOOK_SEED: u64 = 0x5eed_c0de;

const MAGIC: &[u8; 4] = b"VXCB";
const VERSION: u32 = 1;

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Fixed quantizer codebook: `n_codes` centers in `[−1, 1]^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    centers: Matrix<f32>,
}

impl Codebook {
    /// Halton points (one prime base per dimension) under a seeded
    /// Cranley–Patterson rotation, mapped from `[0,1)` to `[−1,1)`.
    pub fn generate(n_codes: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_codes == 0 || dim == 0 || dim > PRIMES.len() {
            return Err(Error::Config(format!(
                "codebook needs n_codes ≥ 1 and 1 ≤ dim ≤ {}, got {n_codes}×{dim}",
                PRIMES.len()
            )));
        }
        let mut rng = SeededRng::new(seed);
        let shift: Vec<f64> = (0..dim).map(|_| rng.uniform()).collect();
        let mut centers = Matrix::zeros(n_codes, dim);
        for i in 0..n_codes {
            for (j, s) in shift.iter().enumerate() {
                let u = (radical_inverse(i as u64 + 1, PRIMES[j] as u64) + s).fract();
                centers.set(i, j, (2.0 * u - 1.0) as f32);
            }
        }
        Self::from_centers(centers)
    }

    pub fn default_book() -> Self {
        Self::generate(DEFAULT_N_CODES, DEFAULT_DIM, DEFAULT_CODEBOOK_SEED)
            .expect("default codebook parameters are valid")
    }

    /// Checks finiteness and pairwise distinctness.
    pub fn from_centers(centers: Matrix<f32>) -> Result<Self> {
        if centers.rows() == 0 || centers.cols() == 0 {
            return Err(Error::Data("codebook has no centers".into()));
        }
        if !centers.is_finite() {
            return Err(Error::Data("codebook has non-finite centers".into()));
        }
        let mut rows: Vec<(Vec<u32>, usize)> = (0..centers.rows())
            .map(|i| (centers.row(i).iter().map(|v| v.to_bits()).collect(), i))
            .collect();
        rows.sort();
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!(
                "codebook centers {} and {} coincide",
                w[0].1, w[1].1
            )));
        }
        Ok(Self { centers })
    }

    pub fn n_codes(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn centers(&self) -> &Matrix<f32> {
        &self.centers
    }

    pub fn center(&self, id: usize) -> &[f32] {
        self.centers.row(id)
    }

    /// Nearest center by squared L2 distance; the lowest id wins ties.
    pub fn nearest(&self, frame: &[f32]) -> TokenId {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..self.n_codes() {
            let d: f64 = frame
                .iter()
                .zip(self.center(c))
                .map(|(&x, &y)| {
                    let diff = x as f64 - y as f64;
                    diff * diff
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best as TokenId
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.n_codes() as u32)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        for &v in self.centers.as_slice() {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.centers.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Data(format!("codebook file: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Data("codebook file: bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(bad)?;
        if version != VERSION {
            return Err(Error::Data(format!("codebook file: unsupported version {version}")));
        }
        let n = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let dim = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let mut data = vec![0f32; n * dim];
        r.read_f32_into::<LittleEndian>(&mut data).map_err(bad)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(bad)?;
        if !rest.is_empty() {
            return Err(Error::Data("codebook file: trailing bytes".into()));
        }
        Self::from_centers(Matrix::from_vec(n, dim, data)?)
    }
}

/// Quantizes each frame (one row) to its nearest codeword.
pub fn audio_encode(frames: &Matrix<f32>, book: &Codebook, role: Role) -> Result<TokenSequence> {
    if frames.cols() != book.dim() && frames.rows() > 0 {
        return Err(Error::shape(frames.cols(), book.dim(), "audio_encode frame dim"));
    }
    let ids = (0..frames.rows()).map(|t| book.nearest(frames.row(t))).collect();
    TokenSequence::speech(role, ids, book.n_codes())
}

/// Looks up the center of each id. The end-of-speech id is rejected.
pub fn audio_decode(ids: &[TokenId], book: &Codebook) -> Result<Matrix<f32>> {
    let mut out = Matrix::zeros(ids.len(), book.dim());
    for (t, &id) in ids.iter().enumerate() {
        if id as usize >= book.n_codes() {
            return Err(Error::Data(format!(
                "speech id {id} is not a codeword (codebook has {})",
                book.n_codes()
            )));
        }
        out.row_mut(t).copy_from_slice(book.center(id as usize));
    }
    Ok(out)
}

/// Synthetic "reference recording" as feature frames in `[−1, 1]^dim`.
///
/// Each seed is a speaker: a latent Gaussian AR(1) process with a
/// speaker-specific mean, correlation and spread, squashed elementwise by
/// `tanh` so frames stay inside the codebook's support.
pub fn synth_reference_audio(seed: u64, n_frames: usize, dim: usize) -> Result<Matrix<f32>> {
    if n_frames == 0 {
        return Err(Error::Parameter("reference audio needs at least one frame".into()));
    }
    let mut rng = SeededRng::new(seed).split(0xa0d1);
    let mean: Vec<f64> = (0..dim).map(|_| 0.3 * rng.normal()).collect();
    let rho = rng.uniform_range(0.5, 0.85);
    let spread = rng.uniform_range(0.8, 1.2);
    let innovation = (1.0 - rho * rho).sqrt();
    let mut z: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let mut out = Matrix::zeros(n_frames, dim);
    for t in 0..n_frames {
        for (j, zj) in z.iter_mut().enumerate() {
            if t > 0 {
                *zj = rho * *zj + innovation * rng.normal();
            }
            out.set(t, j, (mean[j] + spread * *zj).tanh() as f32);
        }
    }
    Ok(out)
}
