use super::GrayMap;
use crate::error::{Error, Result};

const CROSS: [(isize, isize); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

/// Applies a 3x3 cross structuring element. Neighbours outside the image are
/// ignored, so the frame edge never creates or removes foreground.
fn cross_filter(mask: &GrayMap, dilate: bool) -> GrayMap {
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    GrayMap::from_fn(mask.height(), mask.width(), |y, x| {
        let mut hit = !dilate;
        for (dy, dx) in CROSS {
            let (ny, nx) = (y as isize + dy, x as isize + dx);
            if ny < 0 || nx < 0 || ny >= h || nx >= w {
                continue;
            }
            let on = mask.get(ny as usize, nx as usize) == 1.0;
            if dilate && on {
                hit = true;
                break;
            }
            if !dilate && !on {
                hit = false;
                break;
            }
        }
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

pub fn dilate_cross(mask: &GrayMap) -> GrayMap {
    cross_filter(mask, true)
}

pub fn erode_cross(mask: &GrayMap) -> GrayMap {
    cross_filter(mask, false)
}

/// Morphological gradient (cross dilation minus cross erosion) of a binary
/// mask: a band about two pixels wide straddling the object contour.
pub fn extract_boundary(mask: &GrayMap) -> Result<GrayMap> {
    if !mask.is_binary() {
        return Err(Error::InvalidArgument("extract_boundary: mask must be binary (0/1)".into()));
    }
    let dil = dilate_cross(mask);
    let ero = erode_cross(mask);
    let data = dil.data().iter().zip(ero.data()).map(|(a, b)| a - b).collect();
    GrayMap::new(mask.height(), mask.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_boundary() {
        let b = extract_boundary(&GrayMap::zeros(6, 7)).unwrap();
        assert_eq!(b.foreground(), 0);
    }

    #[test]
    fn single_pixel_gives_plus_shape() {
        let mask = GrayMap::from_fn(5, 5, |y, x| if (y, x) == (2, 2) { 1.0 } else { 0.0 });
        let b = extract_boundary(&mask).unwrap();
        #[rustfmt::skip]
        let expect = [
            0., 0., 0., 0., 0.,
            0., 0., 1., 0., 0.,
            0., 1., 1., 1., 0.,
            0., 0., 1., 0., 0.,
            0., 0., 0., 0., 0.,
        ];
        assert_eq!(b.data(), &expect);
    }

    #[test]
    fn rejects_non_binary() {
        assert!(extract_boundary(&GrayMap::from_fn(3, 3, |_, _| 0.5)).is_err());
    }

    #[test]
    fn full_frame_mask_has_no_boundary() {
        let b = extract_boundary(&GrayMap::from_fn(4, 4, |_, _| 1.0)).unwrap();
        assert_eq!(b.foreground(), 0);
    }
}
