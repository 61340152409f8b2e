//! Text parser for eigenvalue lists.
//!
//! Accepts comma-separated complex literals such as `-1`, `-1.5+2i`,
//! `-3e-2-0.5i`, or `2i`. The parser is total over arbitrary input: any
//! malformed item yields a structured error instead of a panic. Stability
//! (negative real parts) is validated by `TransferFunction::new`, not here.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseEigError {
    #[error("empty eigenvalue list")]
    Empty,
    #[error("item {index} (`{item}`): empty entry")]
    EmptyItem { index: usize, item: String },
    #[error("item {index} (`{item}`): invalid number `{part}`")]
    InvalidNumber {
        index: usize,
        item: String,
        part: String,
    },
    #[error("item {index} (`{item}`): trailing characters after complex literal")]
    TrailingInput { index: usize, item: String },
}

/// Parse a comma-separated list of complex eigenvalues.
pub fn parse_eigenvalue_list(input: &str) -> Result<Vec<Complex64>, ParseEigError> {
    let trimmed = input.trim();
    if trimmed.is_empty() {
        return Err(ParseEigError::Empty);
    }
    trimmed
        .split(',')
        .enumerate()
        .map(|(index, item)| parse_complex(index, item))
        .collect()
}

fn parse_complex(index: usize, raw: &str) -> Result<Complex64, ParseEigError> {
    let item = raw.trim();
    if item.is_empty() {
        return Err(ParseEigError::EmptyItem {
            index,
            item: raw.to_string(),
        });
    }
    // Split at the last '+' or '-' that is not a leading sign and not part
    // of an exponent (`e+3`). Everything after it is the imaginary term.
    let bytes = item.as_bytes();
    let mut split = None;
    for (i, &b) in bytes.iter().enumerate().skip(1) {
        if (b == b'+' || b == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
            split = Some(i);
        }
    }

    let err_num = |part: &str| ParseEigError::InvalidNumber {
        index,
        item: item.to_string(),
        part: part.to_string(),
    };

    match split {
        Some(i) => {
            let (re_part, im_part) = item.split_at(i);
            let im_part = im_part.trim();
            let Some(im_digits) = im_part.strip_suffix(['i', 'I']) else {
                return Err(ParseEigError::TrailingInput {
                    index,
                    item: item.to_string(),
                });
            };
            let re: f64 = re_part.trim().parse().map_err(|_| err_num(re_part))?;
            // a bare sign means unit magnitude: `-1+i` == -1 + 1i
            let im: f64 = match im_digits.trim() {
                "+" => 1.0,
                "-" => -1.0,
                digits => digits.parse().map_err(|_| err_num(im_part))?,
            };
            Ok(Complex64::new(re, im))
        }
        None => {
            if let Some(im_digits) = item.strip_suffix(['i', 'I']) {
                let im: f64 = match im_digits.trim() {
                    "" | "+" => 1.0,
                    "-" => -1.0,
                    digits => digits.parse().map_err(|_| err_num(item))?,
                };
                Ok(Complex64::new(0.0, im))
            } else {
                let re: f64 = item.parse().map_err(|_| err_num(item))?;
                Ok(Complex64::new(re, 0.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_real_list() {
        let v = parse_eigenvalue_list("-1, -2.5,-3e-1").unwrap();
        assert_eq!(v[0], Complex64::new(-1.0, 0.0));
        assert_eq!(v[1], Complex64::new(-2.5, 0.0));
        assert_eq!(v[2], Complex64::new(-0.3, 0.0));
    }

    #[test]
    fn parses_complex_literals() {
        assert_eq!(
            parse_eigenvalue_list("-1+2i").unwrap()[0],
            Complex64::new(-1.0, 2.0)
        );
        assert_eq!(
            parse_eigenvalue_list("-1-2i").unwrap()[0],
            Complex64::new(-1.0, -2.0)
        );
        assert_eq!(
            parse_eigenvalue_list("3i").unwrap()[0],
            Complex64::new(0.0, 3.0)
        );
        assert_eq!(
            parse_eigenvalue_list("-1+i").unwrap()[0],
            Complex64::new(-1.0, 1.0)
        );
        assert_eq!(
            parse_eigenvalue_list("-1e+1-2e-1i").unwrap()[0],
            Complex64::new(-10.0, -0.2)
        );
    }

    #[test]
    fn rejects_malformed_items() {
        assert!(parse_eigenvalue_list("").is_err());
        assert!(parse_eigenvalue_list("-1,,").is_err());
        assert!(parse_eigenvalue_list("abc").is_err());
        assert!(parse_eigenvalue_list("-1+2j").is_err());
        assert!(parse_eigenvalue_list("-1+2i3").is_err());
        assert!(parse_eigenvalue_list("--1").is_err());
    }
}
