//! Grounded token-sequence format: location-token codec, prompt and
//! training templates, and response parsing.
//!
//! The image is divided into a `P × P` grid. Cell `(row, col)` is token
//! `<loc_k>` with `k = row · P + col`; a box is the pair (cell holding its
//! top-left pixel, cell holding its bottom-right pixel).

mod sample;
mod sequence;

pub use sample::{
    render_training_sample, training_samples, MaskConfig, TrainingRecord, TrainingSample,
};
pub use sequence::{
    parse_response, render_level_prompt, render_prompt, render_sequence, ClueItem,
    GroundedSequence, GroundedSpan, ParsedResponse, Segment, BOX_CLOSE, BOX_OPEN, GROUNDING,
    IMG_CLOSE, IMG_OPEN, PHRASE_CLOSE, PHRASE_OPEN, SEQ_CLOSE, SEQ_OPEN,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scene_graph::BBox;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("grid size {0} is below 2")]
    GridTooSmall(u32),
    #[error("image size {0}x{1} is empty")]
    EmptyImage(u32, u32),
    #[error("box {bbox} lies outside the {width}x{height} image")]
    OutOfBounds { bbox: BBox, width: u32, height: u32 },
    #[error("location token {0} is outside the grid")]
    TokenOutOfRange(u32),
    #[error("inverted location pair ({0}, {1})")]
    InvertedPair(u32, u32),
    #[error("location pair ({0}, {1}) covers no pixels at this image size")]
    EmptyCell(u32, u32),
    #[error("level {level} outside 1..={max}")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("level {0} has no expression whose parents include the level below")]
    IncompleteInstance(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { size: 32 }
    }
}

impl GridSpec {
    pub fn new(size: u32) -> Result<Self, ProtocolError> {
        if size < 2 {
            return Err(ProtocolError::GridTooSmall(size));
        }
        Ok(Self { size })
    }

    pub fn tokens(&self) -> u32 {
        self.size * self.size
    }

    /// Cell index of coordinate `x` along an axis of `dim` pixels.
    fn cell(&self, x: u32, dim: u32) -> u32 {
        (u64::from(x) * u64::from(self.size) / u64::from(dim)) as u32
    }

    /// First pixel of cell `c` along an axis of `dim` pixels.
    fn edge(&self, c: u32, dim: u32) -> u32 {
        (u64::from(c) * u64::from(dim)).div_ceil(u64::from(self.size)) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocToken(pub u32);

impl LocToken {
    pub fn row(&self, grid: GridSpec) -> u32 {
        self.0 / grid.size
    }

    pub fn col(&self, grid: GridSpec) -> u32 {
        self.0 % grid.size
    }

    pub fn in_grid(&self, grid: GridSpec) -> bool {
        self.0 < grid.tokens()
    }
}

impl fmt::Display for LocToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<loc_{}>", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocPair {
    pub top_left: LocToken,
    pub bottom_right: LocToken,
}

impl LocPair {
    pub fn new(top_left: u32, bottom_right: u32) -> Self {
        Self {
            top_left: LocToken(top_left),
            bottom_right: LocToken(bottom_right),
        }
    }

    /// Top-left cell is above-left of (or equal to) the bottom-right cell.
    pub fn is_ordered(&self, grid: GridSpec) -> bool {
        self.top_left.row(grid) <= self.bottom_right.row(grid)
            && self.top_left.col(grid) <= self.bottom_right.col(grid)
    }

    /// `<b><loc_a><loc_b></b>`
    pub fn render(&self) -> String {
        format!(
            "{BOX_OPEN}{}{}{BOX_CLOSE}",
            self.top_left, self.bottom_right
        )
    }
}

fn check_image(width: u32, height: u32) -> Result<(), ProtocolError> {
    if width == 0 || height == 0 {
        return Err(ProtocolError::EmptyImage(width, height));
    }
    Ok(())
}

pub fn encode_point(x: u32, y: u32, width: u32, height: u32, grid: GridSpec) -> LocToken {
    LocToken(grid.cell(y, height) * grid.size + grid.cell(x, width))
}

pub fn encode_bbox(
    b: &BBox,
    width: u32,
    height: u32,
    grid: GridSpec,
) -> Result<LocPair, ProtocolError> {
    check_image(width, height)?;
    if !b.fits_within(width, height) {
        return Err(ProtocolError::OutOfBounds {
            bbox: *b,
            width,
            height,
        });
    }
    Ok(LocPair {
        top_left: encode_point(b.x_min, b.y_min, width, height, grid),
        bottom_right: encode_point(b.x_max - 1, b.y_max - 1, width, height, grid),
    })
}

/// Pixel rectangle from the top-left corner of the first cell to the
/// bottom-right corner of the second.
pub fn decode_loc(
    pair: &LocPair,
    width: u32,
    height: u32,
    grid: GridSpec,
) -> Result<BBox, ProtocolError> {
    check_image(width, height)?;
    for t in [pair.top_left, pair.bottom_right] {
        if !t.in_grid(grid) {
            return Err(ProtocolError::TokenOutOfRange(t.0));
        }
    }
    if !pair.is_ordered(grid) {
        return Err(ProtocolError::InvertedPair(
            pair.top_left.0,
            pair.bottom_right.0,
        ));
    }
    let (tl, br) = (pair.top_left, pair.bottom_right);
    BBox::new(
        grid.edge(tl.col(grid), width),
        grid.edge(tl.row(grid), height),
        grid.edge(br.col(grid) + 1, width),
        grid.edge(br.row(grid) + 1, height),
    )
    .map_err(|_| ProtocolError::EmptyCell(tl.0, br.0))
}

/// Pixel rectangle of one grid cell.
pub fn decode_bin(
    t: LocToken,
    width: u32,
    height: u32,
    grid: GridSpec,
) -> Result<BBox, ProtocolError> {
    decode_loc(
        &LocPair {
            top_left: t,
            bottom_right: t,
        },
        width,
        height,
        grid,
    )
}
