//! Small named matrices used by tests, the `verify` command and the examples.

use crate::bitmatrix::BitMatrix;

/// The length-12 (3,4)-regular Gallager code as usually printed.
pub fn gallager12() -> BitMatrix {
    BitMatrix::from_strs(&[
        "111100000000",
        "000011110000",
        "000000001111",
        "101001000100",
        "010000110001",
        "000110001010",
        "100100100100",
        "010001010010",
        "001010001001",
    ])
}

/// Column order that aligns [`gallager12`] onto a 3x4 grid of 3x3 permutation blocks.
pub const GALLAGER12_COLUMN_ORDER: [usize; 12] = [0, 7, 8, 1, 4, 9, 2, 6, 10, 3, 5, 11];

/// [`gallager12`] with its columns rearranged by [`GALLAGER12_COLUMN_ORDER`].
pub fn gallager12_aligned() -> BitMatrix {
    let rows: Vec<usize> = (0..9).collect();
    gallager12()
        .permute(&rows, &GALLAGER12_COLUMN_ORDER)
        .expect("static permutation")
}
