//! Self-contained SVG plot of BER and FER against the channel parameter.

use std::fmt::Write as _;

use super::sweep::SweepResult;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

pub fn svg(result: &SweepResult) -> String {
    let xs: Vec<f64> = result.points.iter().map(|p| p.channel_param).collect();
    let positive = result
        .points
        .iter()
        .flat_map(|p| [p.ber, p.fer])
        .filter(|&v| v > 0.0);
    let min_y = positive.fold(1.0f64, f64::min);
    let lo_dec = min_y.log10().floor().min(-1.0);
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y.log10() / lo_dec) * (H - TOP - BOTTOM);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    let d = lo_dec as i32;
    for k in d..=0 {
        let y = py(10f64.powi(k));
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{k}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    for &x in &xs {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            px(x),
            H - BOTTOM + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{} ({} mode, decoder {})</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        result.channel,
        result.mode,
        result.decoder
    )
    .unwrap();
    for (name, color, pick) in [("BER", "#1f77b4", 0usize), ("FER", "#d62728", 1usize)] {
        let pts: Vec<String> = result
            .points
            .iter()
            .map(|p| (p.channel_param, if pick == 0 { p.ber } else { p.fer }))
            .filter(|&(_, v)| v > 0.0)
            .map(|(x, v)| format!("{:.1},{:.1}", px(x), py(v)))
            .collect();
        if !pts.is_empty() {
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
            for pt in &pts {
                let (cx, cy) = pt.split_once(',').expect("formatted pair");
                writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#).unwrap();
            }
        }
        let ly = TOP + 16.0 + 16.0 * pick as f64;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{name}</text>"#,
            W - RIGHT - 40.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Mode;
    use crate::decoders::DecoderKind;
    use crate::sim::sweep::{ChannelParam, PointResult};

    #[test]
    fn renders_points() {
        let pt = |x: f64, ber: f64| PointResult {
            channel_param: x,
            frames: 10,
            bit_errors: 1,
            frame_errors: 1,
            undetected: 0,
            ber,
            fer: ber * 10.0,
            ci_low: 0.0,
            ci_high: 1.0,
            mean_iters: 1.0,
            seconds: None,
        };
        let r = SweepResult {
            decoder: DecoderKind::Sepr,
            channel: ChannelParam::EbN0,
            mode: Mode::Base,
            bits_per_frame: 36,
            points: vec![pt(1.0, 1e-2), pt(2.0, 1e-4), pt(3.0, 0.0)],
        };
        let s = svg(&r);
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<circle").count(), 4);
        assert!(s.contains(">1e-4<") && s.contains(">1e0<"));
    }
}
