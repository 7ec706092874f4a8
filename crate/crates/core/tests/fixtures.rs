use std::path::PathBuf;

use sandnet::network::{build_grid, GridSpec, Neighborhood};
use sandnet::render::{render_grid, ColorMap, ImageFormat, Rgb};
use sandnet::sandpile::Configuration;
use sandnet::scenario::{parse_document, parse_scenario, serialize_scenario};

fn scenarios() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_scenarios_round_trip() {
    let all = scenarios();
    assert!(all.len() >= 4);
    for (name, text) in all {
        let spec = parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = parse_scenario(&serialize_scenario(&spec)).unwrap();
        assert_eq!(spec, again, "{name}");
        // the documents agree too, apart from the output section which the
        // spec does not carry
        let mut doc = parse_document(&text).unwrap();
        doc.output = None;
        let mut back = parse_document(&serialize_scenario(&spec)).unwrap();
        back.output = None;
        assert_eq!(doc.into_spec().unwrap(), back.into_spec().unwrap(), "{name}");
    }
}

#[test]
fn two_toppling_result_renders_golden() {
    let net = build_grid(GridSpec::new(5, Neighborhood::Moore)).unwrap();
    #[rustfmt::skip]
    let phi = Configuration::new(vec![
        4, 1, 0, 1, 3,
        5, 1, 7, 3, 2,
        1, 3, 4, 0, 5,
        5, 6, 4, 6, 6,
        3, 5, 4, 5, 3,
    ]);
    let img = render_grid(&net, &phi, &ColorMap::default(), ImageFormat::Ppm { scale: 1 }).unwrap();
    let header = b"P6\n5 5\n255\n";
    assert_eq!(&img[..header.len()], header);
    let px: Vec<Rgb> = img[header.len()..].chunks(3).map(|c| Rgb(c[0], c[1], c[2])).collect();
    let (g, y, m, r, k) = (Rgb::GREEN, Rgb::YELLOW, Rgb::MAGENTA, Rgb::RED, Rgb::BLACK);
    #[rustfmt::skip]
    let golden = [
        r, y, g, y, m,
        r, y, k, m, y,
        y, m, r, g, r,
        r, k, r, k, k,
        m, r, r, r, m,
    ];
    assert_eq!(px, golden);
    assert_eq!(phi.values().iter().filter(|&&h| h == 7).count(), 1);
    assert_eq!(phi.values().iter().filter(|&&h| h == 6).count(), 3);
}
