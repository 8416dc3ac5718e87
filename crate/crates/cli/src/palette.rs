//! Fixed color table for rendering label images.

use versnet::LabelImage;

/// RGB per class id 1..=12: background black, ten hues 36° apart starting
/// at red, front white.
pub const PALETTE: [[u8; 3]; 12] = [
    [0, 0, 0],
    [255, 0, 0],
    [255, 153, 0],
    [204, 255, 0],
    [51, 255, 0],
    [0, 255, 102],
    [0, 255, 255],
    [0, 102, 255],
    [51, 0, 255],
    [204, 0, 255],
    [255, 0, 153],
    [255, 255, 255],
];

pub fn color(class_id: u8) -> [u8; 3] {
    PALETTE[(class_id as usize).clamp(1, PALETTE.len()) - 1]
}

/// Interleaved RGB rendering of a label image.
pub fn render(label: &LabelImage) -> Vec<u8> {
    label.classes().iter().flat_map(|&c| color(c)).collect()
}
