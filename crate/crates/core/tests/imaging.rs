use proptest::prelude::*;

use octpost_core::imaging::{enface, group_average, histogram_stats, load_stack, load_tiff_stack, save_stack, Image, Stack};

fn image_strategy(max_w: usize, max_h: usize) -> impl Strategy<Value = Image> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h).prop_map(move |d| Image::from_vec(w, h, d).unwrap())
    })
}

fn stack_strategy() -> impl Strategy<Value = Stack> {
    (1usize..12, 1usize..12, 1usize..5).prop_flat_map(|(w, h, n)| {
        proptest::collection::vec(proptest::collection::vec(any::<u8>(), w * h), n).prop_map(move |frames| {
            Stack::new(frames.into_iter().map(|d| Image::from_vec(w, h, d).unwrap()).collect()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn png_round_trip_is_bit_exact(stack in stack_strategy(), res in 0.1f64..5.0) {
        let mut stack = stack;
        stack.set_axial_res(res).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_stack(&stack, dir.path()).unwrap();
        let back = load_stack(dir.path(), "*.png").unwrap();
        prop_assert_eq!(back, stack);
    }

    #[test]
    fn histogram_counts_every_pixel(img in image_strategy(40, 40)) {
        let s = histogram_stats([&img]);
        prop_assert_eq!(s.histogram.iter().sum::<u64>(), (img.width() * img.height()) as u64);
        prop_assert_eq!(s.zero_count, s.histogram[0]);
        let zeros = img.as_slice().iter().filter(|&&v| v == 0).count() as u64;
        prop_assert_eq!(s.zero_count, zeros);
    }

    #[test]
    fn enface_of_identical_frames_is_column_means(img in image_strategy(30, 30), n in 1usize..5) {
        let stack = Stack::new(vec![img.clone(); n]).unwrap();
        let e = enface(&stack).unwrap();
        prop_assert_eq!(e.dims(), (img.width(), n));
        for x in 0..img.width() {
            let mean = (0..img.height()).map(|y| img.get(x, y) as f64).sum::<f64>() / img.height() as f64;
            for row in 0..n {
                prop_assert!((e.get(x, row) as f64 - mean).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn group_average_is_idempotent_on_constant_stacks(v in any::<u8>(), groups in 1usize..4, size in 1usize..4) {
        let stack = Stack::new(vec![Image::filled(7, 5, v); groups * size]).unwrap();
        let avg = group_average(&stack, size).unwrap();
        prop_assert_eq!(avg.len(), groups);
        prop_assert!(avg.frames().iter().all(|f| f.as_slice().iter().all(|&p| p == v)));
    }

    #[test]
    fn group_average_commutes_with_offset(stack in stack_strategy(), offset in 0u8..40) {
        let map = |s: &Stack, f: &dyn Fn(u8) -> u8| {
            s.replace_frames(
                s.frames()
                    .iter()
                    .map(|im| Image::from_vec(im.width(), im.height(), im.as_slice().iter().map(|&p| f(p)).collect()).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        // Keep headroom so the offset never clamps.
        let base = map(&stack, &|p| p.min(255 - offset));
        let shifted = map(&base, &|p| p + offset);
        let n = stack.len();
        let a = group_average(&base, n).unwrap();
        let b = group_average(&shifted, n).unwrap();
        for (x, y) in a.frame(0).as_slice().iter().zip(b.frame(0).as_slice()) {
            prop_assert!((*y as i32 - *x as i32 - offset as i32).abs() <= 1);
        }
    }
}

#[test]
fn multipage_tiff_loads_in_page_order() {
    use tiff::encoder::{colortype::Gray8, TiffEncoder};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stack.tif");
    let pages: Vec<Vec<u8>> = (0..3u8).map(|k| (0..12u8).map(|i| i * 10 + k).collect()).collect();
    {
        let file = std::fs::File::create(&path).unwrap();
        let mut enc = TiffEncoder::new(file).unwrap();
        for p in &pages {
            enc.write_image::<Gray8>(4, 3, p).unwrap();
        }
    }
    let stack = load_tiff_stack(&path).unwrap();
    assert_eq!(stack.len(), 3);
    for (f, p) in stack.frames().iter().zip(&pages) {
        assert_eq!(f.dims(), (4, 3));
        assert_eq!(f.as_slice(), p.as_slice());
    }
}

#[test]
fn load_rejects_duplicate_indices_and_empty_dirs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_stack(dir.path(), "*.png").is_err());
    let img = Image::filled(4, 4, 9).to_gray_image();
    img.save(dir.path().join("a_01.png")).unwrap();
    img.save(dir.path().join("b_1.png")).unwrap();
    assert!(load_stack(dir.path(), "*.png").is_err());
}
