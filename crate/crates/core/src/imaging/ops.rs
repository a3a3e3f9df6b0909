use super::{Image, ImagingError, Stack};
use crate::par;

/// Average adjacent groups of `group_size` frames, rounding half-up.
pub fn group_average(stack: &Stack, group_size: usize) -> Result<Stack, ImagingError> {
    if group_size == 0 || !stack.len().is_multiple_of(group_size) {
        return Err(ImagingError::GroupMismatch {
            frames: stack.len(),
            group_size,
        });
    }
    let groups = stack.len() / group_size;
    let (w, h) = (stack.width(), stack.height());
    let g = group_size as u32;
    let frames = par::map_range(groups, |gi| {
        let members = &stack.frames()[gi * group_size..(gi + 1) * group_size];
        let mut sums = vec![0u32; w * h];
        for f in members {
            for (s, &v) in sums.iter_mut().zip(f.as_slice()) {
                *s += v as u32;
            }
        }
        // round(sum / g) half-up, in integers
        let data = sums.iter().map(|&s| ((2 * s + g) / (2 * g)) as u8).collect();
        Image::from_vec(w, h, data).expect("dimensions preserved")
    });
    let labels = (0..groups)
        .map(|gi| stack.source_labels()[gi * group_size].clone())
        .collect();
    Stack::with_labels(frames, stack.axial_res_um_per_px(), labels)
}

/// Mean projection over depth: one output row per frame.
pub fn enface(stack: &Stack) -> Result<Image, ImagingError> {
    if stack.is_empty() {
        return Err(ImagingError::NoFrames("empty stack".into()));
    }
    let (w, h) = (stack.width(), stack.height());
    let rows = par::map_indexed(stack.frames(), |_, f| {
        let mut sums = vec![0u64; w];
        for y in 0..h {
            for (s, &v) in sums.iter_mut().zip(f.row(y)) {
                *s += v as u64;
            }
        }
        let h = h as u64;
        sums.into_iter()
            .map(|s| ((2 * s + h) / (2 * h)) as u8)
            .collect::<Vec<u8>>()
    });
    Image::from_vec(w, stack.len(), rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_stack(values: &[u8], w: usize, h: usize) -> Stack {
        Stack::new(values.iter().map(|&v| Image::filled(w, h, v)).collect()).unwrap()
    }

    #[test]
    fn group_average_counts_and_rounds() {
        let s = constant_stack(&[0, 255, 255], 3, 2);
        let avg = group_average(&s, 3).unwrap();
        assert_eq!(avg.len(), 1);
        assert!(avg.frame(0).as_slice().iter().all(|&v| v == 170));

        let s = constant_stack(&[10, 10, 10], 3, 2);
        assert_eq!(group_average(&s, 3).unwrap().frame(0), &Image::filled(3, 2, 10));

        // 1 + 2 = 3 -> 1.5 rounds up to 2
        let s = constant_stack(&[1, 2], 1, 1);
        assert_eq!(group_average(&s, 2).unwrap().frame(0).get(0, 0), 2);
    }

    #[test]
    fn group_average_frame_count() {
        let s = constant_stack(&vec![7u8; 1080], 1, 1);
        assert_eq!(group_average(&s, 3).unwrap().len(), 360);
    }

    #[test]
    fn group_average_rejects_remainder() {
        let s = constant_stack(&[1, 2, 3, 4], 1, 1);
        assert!(matches!(
            group_average(&s, 3),
            Err(ImagingError::GroupMismatch { frames: 4, group_size: 3 })
        ));
        assert!(group_average(&s, 0).is_err());
    }

    #[test]
    fn enface_of_constant_stack() {
        let s = constant_stack(&[64, 64, 64], 5, 4);
        let e = enface(&s).unwrap();
        assert_eq!(e.dims(), (5, 3));
        assert!(e.as_slice().iter().all(|&v| v == 64));
    }

    #[test]
    fn enface_single_bright_column() {
        let frame = Image::from_fn(6, 5, |x, _| if x == 2 { 255 } else { 0 });
        let e = enface(&Stack::new(vec![frame]).unwrap()).unwrap();
        assert_eq!(e.as_slice(), &[0, 0, 255, 0, 0, 0]);
    }
}
