//! Minimal static SVG output: multi-series line plots and space-time
//! heatmaps. No external renderer; the files are plain hand-built SVG.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct Series<'a> {
    pub label: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

fn finite_min_max<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || lo == hi {
        let c = if lo.is_finite() { lo } else { 0.0 };
        (c - 1.0, c + 1.0)
    } else {
        (lo, hi)
    }
}

fn axes(title: &str, x_range: (f64, f64), y_range: (f64, f64)) -> String {
    let mut s = String::new();
    let (x0, x1) = (MARGIN, WIDTH - MARGIN);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
    s.push_str(&format!(
        "<rect x='0' y='0' width='{WIDTH}' height='{HEIGHT}' fill='white'/>\n\
         <text x='{}' y='24' text-anchor='middle' font-size='16' font-family='sans-serif'>{title}</text>\n",
        WIDTH / 2.0
    ));
    s.push_str(&format!(
        "<line x1='{x0}' y1='{y0}' x2='{x1}' y2='{y0}' stroke='black'/>\n\
         <line x1='{x0}' y1='{y0}' x2='{x0}' y2='{y1}' stroke='black'/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_range.0 + f * (x_range.1 - x_range.0);
        let yv = y_range.0 + f * (y_range.1 - y_range.0);
        let xp = x0 + f * (x1 - x0);
        let yp = y0 - f * (y0 - y1);
        s.push_str(&format!(
            "<text x='{xp}' y='{}' text-anchor='middle' font-size='11' font-family='sans-serif'>{xv:.3}</text>\n\
             <text x='{}' y='{yp}' text-anchor='end' font-size='11' font-family='sans-serif'>{yv:.3}</text>\n",
            y0 + 18.0,
            x0 - 6.0
        ));
    }
    s
}

/// Multi-series line plot over a shared x axis.
pub fn line_plot(title: &str, series: &[Series<'_>]) -> String {
    let (x_lo, x_hi) = finite_min_max(series.iter().flat_map(|s| s.xs.iter()));
    let (y_lo, y_hi) = finite_min_max(series.iter().flat_map(|s| s.ys.iter()));
    let to_px = |x: f64, y: f64| {
        let fx = (x - x_lo) / (x_hi - x_lo);
        let fy = (y - y_lo) / (y_hi - y_lo);
        (
            MARGIN + fx * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN - fy * (HEIGHT - 2.0 * MARGIN),
        )
    };
    let mut svg = format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}'>\n{}",
        axes(title, (x_lo, x_hi), (y_lo, y_hi))
    );
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let points: Vec<String> = s
            .xs
            .iter()
            .zip(s.ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points='{}' fill='none' stroke='{color}' stroke-width='1.5'/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "<text x='{}' y='{}' font-size='12' font-family='sans-serif' fill='{color}'>{}</text>\n",
            WIDTH - MARGIN + 4.0 - 120.0,
            MARGIN + 16.0 * si as f64,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Blue-white-red diverging color for `v` in `[lo, hi]`.
fn diverging_color(v: f64, lo: f64, hi: f64) -> String {
    let f = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let (r, g, b) = if f < 0.5 {
        let s = f * 2.0;
        (
            (33.0 + s * (247.0 - 33.0)) as u8,
            (102.0 + s * (247.0 - 102.0)) as u8,
            (172.0 + s * (247.0 - 172.0)) as u8,
        )
    } else {
        let s = (f - 0.5) * 2.0;
        (
            (247.0 + s * (178.0 - 247.0)) as u8,
            (247.0 - s * (247.0 - 24.0)) as u8,
            (247.0 - s * (247.0 - 43.0)) as u8,
        )
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Space-time heatmap; `values[j][i]` is the field at `(xs[i], ts[j])`.
pub fn heatmap(title: &str, xs: &[f64], ts: &[f64], values: &[Vec<f64>]) -> String {
    let (lo, hi) = finite_min_max(values.iter().flatten());
    let mut svg = format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}'>\n{}",
        axes(
            title,
            (xs[0], xs[xs.len() - 1]),
            (ts[0], ts[ts.len() - 1])
        )
    );
    // Cap the rect count so dense series stay lightweight.
    let max_cells = 200usize;
    let xi_step = (xs.len() / max_cells).max(1);
    let tj_step = (ts.len() / max_cells).max(1);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let nx = (xs.len() + xi_step - 1) / xi_step;
    let nt = (ts.len() + tj_step - 1) / tj_step;
    let cw = plot_w / nx as f64;
    let ch = plot_h / nt as f64;
    for (jj, j) in (0..ts.len()).step_by(tj_step).enumerate() {
        for (ii, i) in (0..xs.len()).step_by(xi_step).enumerate() {
            let color = diverging_color(values[j][i], lo, hi);
            let x = MARGIN + ii as f64 * cw;
            let y = HEIGHT - MARGIN - (jj + 1) as f64 * ch;
            svg.push_str(&format!(
                "<rect x='{x:.2}' y='{y:.2}' width='{:.2}' height='{:.2}' fill='{color}'/>\n",
                cw + 0.5,
                ch + 0.5
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
