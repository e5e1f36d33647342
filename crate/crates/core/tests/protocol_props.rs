//! Location codec and sequence format properties.

use groundchain::protocol::{
    decode_bin, decode_loc, encode_bbox, parse_response, render_prompt, render_sequence, GridSpec,
    GroundedSequence, GroundedSpan, LocPair, LocToken, Segment,
};
use groundchain::scene_graph::BBox;
use proptest::prelude::*;

const G: GridSpec = GridSpec { size: 32 };

fn image_and_box() -> impl Strategy<Value = (u32, u32, BBox)> {
    (1u32..=4096, 1u32..=4096).prop_flat_map(|(w, h)| {
        (0..w, 0..h).prop_flat_map(move |(x0, y0)| {
            (x0 + 1..=w, y0 + 1..=h)
                .prop_map(move |(x1, y1)| (w, h, BBox::new(x0, y0, x1, y1).unwrap()))
        })
    })
}

#[test]
fn every_bin_round_trips() {
    for (w, h) in [(32, 32), (224, 224), (640, 480), (1000, 333), (4096, 77)] {
        for k in 0..G.tokens() {
            let cell = decode_bin(LocToken(k), w, h, G).unwrap();
            assert_eq!(
                encode_bbox(&cell, w, h, G).unwrap(),
                LocPair::new(k, k),
                "bin {k} at {w}x{h}"
            );
        }
    }
}

#[test]
fn tiny_images_keep_every_pixel_reachable() {
    for w in 1..32 {
        for x in 0..w {
            let b = BBox::new(x, 0, x + 1, 1).unwrap();
            let d = decode_loc(&encode_bbox(&b, w, 1, G).unwrap(), w, 1, G).unwrap();
            assert_eq!(d, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn decoded_box_covers_input_within_one_cell((w, h, b) in image_and_box()) {
        let d = decode_loc(&encode_bbox(&b, w, h, G).unwrap(), w, h, G).unwrap();
        prop_assert!(d.contains(&b));
        let (ex, ey) = (w.div_ceil(32), h.div_ceil(32));
        prop_assert!(b.x_min - d.x_min < ex && d.x_max - b.x_max < ex);
        prop_assert!(b.y_min - d.y_min < ey && d.y_max - b.y_max < ey);
    }

    #[test]
    fn encoding_is_idempotent_after_decoding((w, h, b) in image_and_box(), p in 2u32..=64) {
        let grid = GridSpec::new(p).unwrap();
        let pair = encode_bbox(&b, w, h, grid).unwrap();
        let d = decode_loc(&pair, w, h, grid).unwrap();
        prop_assert_eq!(encode_bbox(&d, w, h, grid).unwrap(), pair);
    }
}

fn phrase() -> impl Strategy<Value = String> {
    "[a-zA-Z ,.'-]{0,24}"
}

fn segment() -> impl Strategy<Value = Segment> {
    prop_oneof![
        "[a-z ,.]{1,12}".prop_map(Segment::Text),
        (phrase(), prop::option::of((0u32..1024, 0u32..1024))).prop_map(|(text, loc)| {
            Segment::Span(GroundedSpan {
                text,
                loc: loc.map(|(a, b)| LocPair::new(a, b)),
            })
        }),
    ]
}

fn sequence() -> impl Strategy<Value = GroundedSequence> {
    ("[a-z0-9_./]{1,16}", prop::collection::vec(segment(), 0..12))
        .prop_map(|(image, segments)| GroundedSequence { image, segments })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn render_and_parse_are_inverse(seq in sequence()) {
        let text = render_sequence(&seq);
        let parsed = parse_response(&text, G);
        prop_assert_eq!(parsed.warnings, 0);
        let spans: Vec<GroundedSpan> = seq.spans().cloned().collect();
        prop_assert_eq!(&parsed.spans, &spans);
        let mut it = parsed.spans.into_iter();
        let rebuilt = GroundedSequence {
            image: seq.image.clone(),
            segments: seq
                .segments
                .iter()
                .map(|s| match s {
                    Segment::Text(t) => Segment::Text(t.clone()),
                    Segment::Span(_) => Segment::Span(it.next().unwrap()),
                })
                .collect(),
        };
        prop_assert_eq!(render_sequence(&rebuilt), text);
    }

    #[test]
    fn prompt_without_clues_has_no_clue_clause(image in "[a-z0-9_.]{1,12}", target in "[a-z ]{1,30}") {
        let p = render_prompt(&image, &[], &target);
        prop_assert_eq!(p, format!("<s><img>{image}</img><grounding><p>{target}</p>"));
    }

    #[test]
    fn parser_never_panics(raw in "(<p>|</p>|<b>|</b>|<loc_[0-9]{1,5}>|[a-z ]{0,4}|<|>){0,20}") {
        let r = parse_response(&raw, G);
        for s in r.spans {
            prop_assert!(s.loc.is_some_and(|l| l.top_left.0 < 1024 && l.bottom_right.0 < 1024) || s.loc.is_none());
        }
    }
}
