//! CSV and SVG rendering of traces. Both outputs are pure functions of the
//! traces, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::Trace;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn non_empty(traces: &[Trace]) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces to write"));
    }
    Ok(())
}

pub fn render_csv(traces: &[Trace]) -> Result<String> {
    non_empty(traces)?;
    let mut out = String::from("method,seed,iteration,relative_error\n");
    for t in traces {
        for p in &t.records {
            let _ = writeln!(
                out,
                "{},{},{},{:e}",
                t.method, t.seed, p.iteration, p.relative_error
            );
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Columns `method,seed,iteration,relative_error`.
pub fn emit_csv(traces: &[Trace], path: &Path) -> Result<()> {
    let text = render_csv(traces)?;
    write_file(path, &text)
}

pub fn emit_svg(traces: &[Trace], path: &Path) -> Result<()> {
    let text = render_svg(traces, "")?;
    write_file(path, &text)
}

/// Log-y line chart, one polyline per trace.
pub fn render_svg(traces: &[Trace], title: &str) -> Result<String> {
    non_empty(traces)?;
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 50.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let max_k = traces
        .iter()
        .filter_map(|t| t.last().map(|p| p.iteration))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let positive = traces
        .iter()
        .flat_map(|t| t.errors())
        .filter(|e| *e > 0.0 && e.is_finite());
    let min_err = positive.fold(1.0_f64, f64::min);
    let y_lo = min_err.log10().floor().max(-300.0).min(-1.0);
    let y_hi = 0.0_f64;
    let sx = |k: f64| LEFT + k / max_k * plot_w;
    let sy = |e: f64| {
        let l = if e > 0.0 { e.log10().max(y_lo) } else { y_lo };
        TOP + (y_hi - l) / (y_hi - y_lo) * plot_h
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if !title.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(title)
        );
    }
    // y decades
    let decades = (y_hi - y_lo) as i64;
    let step = (decades / 8).max(1);
    let mut d = 0;
    while d <= decades {
        let e = y_hi - d as f64;
        let y = sy(10f64.powf(e));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            e as i64
        );
        d += step;
    }
    // x ticks
    for i in 0..=5 {
        let k = max_k * i as f64 / 5.0;
        let x = sx(k);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 16.0,
            k.round() as u64
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iterations</text>"#,
        LEFT + plot_w / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">relative error</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (idx, t) in traces.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut pts = String::new();
        for p in &t.records {
            let _ = write!(
                pts,
                "{:.2},{:.2} ",
                sx(p.iteration as f64),
                sy(p.relative_error)
            );
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = TOP + 14.0 + 18.0 * idx as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(&t.method)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
