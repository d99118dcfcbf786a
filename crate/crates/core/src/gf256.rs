//! Arithmetic over GF(2^8) with reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11B).
//!
//! Multiplication and inversion go through log/antilog tables built at compile
//! time with generator 0x03. Addition is XOR.

use thiserror::Error;

/// Reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11B;

/// Generator used to build the log/antilog tables.
pub const GENERATOR: u8 = 0x03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("region length mismatch: dst has {dst} octets, src has {src}")]
    LengthMismatch { dst: usize, src: usize },
}

/// Element of GF(2^8).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    pub fn inv(self) -> Result<Gf256, FieldError> {
        inv(self.0).map(Gf256)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Gf256(v)
    }
}

impl std::ops::Add for Gf256 {
    type Output = Gf256;
    #[inline]
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(add(self.0, rhs.0))
    }
}

// Subtraction is addition in characteristic 2.
impl std::ops::Sub for Gf256 {
    type Output = Gf256;
    #[inline]
    fn sub(self, rhs: Gf256) -> Gf256 {
        Gf256(add(self.0, rhs.0))
    }
}

impl std::ops::Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(mul(self.0, rhs.0))
    }
}

const fn xtime3(x: u8) -> u8 {
    // x * 0x03 = x * 0x02 ^ x
    let doubled = ((x as u16) << 1) ^ if x & 0x80 != 0 { POLY } else { 0 };
    (doubled as u8) ^ x
}

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u8 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x;
        exp[i + 255] = x;
        log[x as usize] = i as u8;
        x = xtime3(x);
        i += 1;
    }
    // exp[510], exp[511] are never indexed (max log sum is 508).
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_tables();
static EXP: [u8; 512] = TABLES.0;
static LOG: [u8; 256] = TABLES.1;

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
}

pub fn inv(a: u8) -> Result<u8, FieldError> {
    if a == 0 {
        return Err(FieldError::ZeroInverse);
    }
    Ok(EXP[255 - LOG[a as usize] as usize])
}

/// Multiplication row for a fixed coefficient: `row[x] == mul(c, x)`.
pub fn mul_row(c: u8) -> [u8; 256] {
    let mut row = [0u8; 256];
    if c != 0 {
        let lc = LOG[c as usize] as usize;
        for (x, out) in row.iter_mut().enumerate().skip(1) {
            *out = EXP[lc + LOG[x] as usize];
        }
    }
    row
}

/// `dst[i] ^= c * src[i]` for every position.
pub fn axpy(dst: &mut [u8], src: &[u8], c: u8) -> Result<(), FieldError> {
    if dst.len() != src.len() {
        return Err(FieldError::LengthMismatch {
            dst: dst.len(),
            src: src.len(),
        });
    }
    match c {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => {
            let row = mul_row(c);
            dst.iter_mut()
                .zip(src)
                .for_each(|(d, s)| *d ^= row[*s as usize]);
        }
    }
    Ok(())
}

/// `region[i] = c * region[i]` in place.
pub fn scale(region: &mut [u8], c: u8) {
    match c {
        0 => region.fill(0),
        1 => {}
        _ => {
            let row = mul_row(c);
            region.iter_mut().for_each(|x| *x = row[*x as usize]);
        }
    }
}
