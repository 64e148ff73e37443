//! Deterministic SVG plot of `h` against epochs, colored by status.

use std::fmt::Write as _;

use crakit::hybrid::Location;
use crakit::sim::Trajectory;
use crakit::system::CpsSystem;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Red while the adversary drives the input, blue while the input is zero,
/// green under the designed policy.
pub fn color(status: Location) -> &'static str {
    match status {
        Location::Corrupted | Location::Restoration | Location::Unsafe => "#d62728",
        Location::Restart | Location::Switching => "#1f77b4",
        Location::Normal | Location::SafetyController => "#2ca02c",
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders `h` (and `D` when the system has such a state) with horizontal
/// guides at `h = 0` and `h = c_0`.
pub fn render(tr: &Trajectory, system: &CpsSystem, c0: f64, epoch_seconds: f64) -> String {
    let d_index = system.variables().iter().position(|v| v == "D");
    let epochs: Vec<f64> = tr.samples.iter().map(|s| s.t / epoch_seconds).collect();
    let t_max = epochs.last().copied().unwrap_or(0.0).max(1.0);
    let mut lo = tr.samples.iter().map(|s| s.h).fold(0.0f64.min(c0), f64::min);
    let mut hi = tr.samples.iter().map(|s| s.h).fold(c0.max(0.0), f64::max);
    if let Some(i) = d_index {
        for s in &tr.samples {
            lo = lo.min(s.x[i]);
            hi = hi.max(s.x[i]);
        }
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let px = |e: f64| MARGIN + e / t_max * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1) = (fmt(px(0.0)), fmt(px(t_max)));
    for (v, label, dash) in [(0.0, "h = 0", "4 2"), (c0, "h = c0", "2 2")] {
        let y = fmt(py(v));
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#555" stroke-dasharray="{dash}"/><text x="{x1}" y="{y}" font-size="11" text-anchor="end" dy="-3">{label}</text>"##
        );
    }
    let bottom = fmt(HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r##"<line x1="{x0}" y1="{bottom}" x2="{x1}" y2="{bottom}" stroke="black"/><text x="{}" y="{}" font-size="12" text-anchor="middle">epoch</text>"##,
        fmt(WIDTH / 2.0),
        fmt(HEIGHT - 15.0)
    );

    if let Some(i) = d_index {
        let pts: Vec<String> = tr
            .samples
            .iter()
            .zip(&epochs)
            .map(|(p, e)| format!("{},{}", fmt(px(*e)), fmt(py(p.x[i]))))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#999" stroke-width="1" stroke-dasharray="3 3"/>"##,
            pts.join(" ")
        );
    }

    // Step `k - 1 → k` takes the status of sample `k`; runs of equal status
    // become one polyline.
    let n = tr.samples.len();
    let mut k = 1;
    while k < n {
        let status = tr.samples[k].status;
        let mut e = k;
        while e + 1 < n && tr.samples[e + 1].status == status {
            e += 1;
        }
        let pts: Vec<String> = (k - 1..=e)
            .map(|j| format!("{},{}", fmt(px(epochs[j])), fmt(py(tr.samples[j].h))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            color(status)
        );
        k = e + 1;
    }
    s.push_str("</svg>\n");
    s
}
