use proptest::prelude::*;
use rsvlts::geom::{rbb_from_params, BoxParams, Point, RotatedBox};
use rsvlts::textcodec::*;

fn int_points() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-100_000i64..100_000, -100_000i64..100_000), 0..12).prop_map(|v| {
        v.into_iter()
            .map(|(x, y)| Point::new(x as f64, y as f64))
            .collect()
    })
}

fn real_points() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-1e9..1e9f64, -1e9..1e9f64), 0..8)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
}

fn bin_box() -> impl Strategy<Value = RotatedBox> {
    (
        50.0..950.0f64,
        50.0..950.0f64,
        10.0..80.0f64,
        10.0..80.0f64,
        -1.5..1.5f64,
    )
        .prop_map(|(cx, cy, w, h, theta)| {
            let b = rbb_from_params(&BoxParams {
                cx,
                cy,
                w,
                h,
                theta,
            })
            .unwrap();
            let c = b.corners().map(|p| Point::new(p.x.floor(), p.y.floor()));
            RotatedBox::from_quad(c).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn integer_point_sets_roundtrip(pts in int_points()) {
        let s = serialize_point_set(&pts).unwrap();
        prop_assert!(!s.contains('\n'));
        prop_assert_eq!(parse_point_set(&s).unwrap(), pts);
    }
}

proptest! {
    #[test]
    fn real_point_sets_roundtrip(pts in real_points()) {
        let s = serialize_point_set(&pts).unwrap();
        prop_assert_eq!(parse_point_set(&s).unwrap(), pts);
    }

    #[test]
    fn rbox_lists_roundtrip(boxes in prop::collection::vec(bin_box(), 0..6)) {
        let space = CoordSpace::normalized(640, 480);
        let p = AnswerPayload::RboxList(boxes);
        let s = serialize_answer(&p, &space).unwrap();
        let back = parse_answer(&s, TaskTag::Detection, &space).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(serialize_answer(&back, &space).unwrap(), s);
    }

    #[test]
    fn prose_around_answers_is_ignored(boxes in prop::collection::vec(bin_box(), 1..4)) {
        let space = CoordSpace::normalized(640, 480);
        let p = AnswerPayload::RboxList(boxes);
        let s = format!("Sure! Here they are: {}. Hope that helps", serialize_answer(&p, &space).unwrap());
        prop_assert_eq!(parse_answer(&s, TaskTag::Grounding, &space).unwrap(), p);
    }

    #[test]
    fn geoloc_roundtrip(lat in -90.0..90.0f64, lon in -180.0..180.0f64, city in "[A-Z][a-z]{1,12}( [A-Z][a-z]{1,8})?") {
        let space = CoordSpace::pixel(1, 1);
        let p = AnswerPayload::GeoLoc { city, lat, lon };
        let s = serialize_answer(&p, &space).unwrap();
        prop_assert_eq!(parse_answer(&s, TaskTag::Geoloc, &space).unwrap(), p);
    }

    #[test]
    fn split_inverts_build(idx in 0usize..7, body in "[a-z][a-z ,?]{0,40}[a-z?]") {
        let tag = TaskTag::ALL[idx];
        let text = build_instruction(tag, &body);
        prop_assert_eq!(split_instruction(&text), (Some(tag), body));
    }

    #[test]
    fn normalize_error_within_half_bin(
        x in 0.0..4096.0f64, y in 0.0..4096.0f64, w in 4096u32..8192, h in 4096u32..8192, bins in 2u32..2000
    ) {
        let space = CoordSpace::normalized(w, h).with_bins(bins);
        let p = Point::new(x, y);
        let q = space.denormalize_point(space.normalize_point(p));
        prop_assert!((q.x - x).abs() <= w as f64 / (2.0 * bins as f64) + 1e-9);
        prop_assert!((q.y - y).abs() <= h as f64 / (2.0 * bins as f64) + 1e-9);
    }
}
