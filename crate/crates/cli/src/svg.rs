//! Minimal SVG line plot.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Polyline of `(ω_exp, rate)` over `x_range`, with axes and a dashed
/// zero line.
pub fn rate_curve_svg(points: &[(f64, f64)], x_range: (f64, f64)) -> String {
    let (x0, x1) = x_range;
    let y_lo = points.iter().map(|p| p.1).fold(0.0f64, f64::min);
    let y_hi = points.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let y_span = if y_hi > y_lo { y_hi - y_lo } else { 1.0 };
    let x_span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let sx = |x: f64| MARGIN + (x - x0) / x_span * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / y_span * (HEIGHT - 2.0 * MARGIN);

    let poly = points
        .iter()
        .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
        .collect::<Vec<_>>()
        .join(" ");
    let (left, right, bottom, top) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let zero = sy(0.0);
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>
<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>
<line x1="{left}" y1="{zero:.3}" x2="{right}" y2="{zero:.3}" stroke="gray" stroke-dasharray="6,4"/>
<polyline fill="none" stroke="steelblue" stroke-width="2" points="{poly}"/>
<text x="{left}" y="{xl:.3}" font-size="12">{x0:.4}</text>
<text x="{right}" y="{xl:.3}" font-size="12" text-anchor="end">{x1:.4}</text>
<text x="{xc:.3}" y="{xt:.3}" font-size="13" text-anchor="middle">expected winning probability</text>
<text x="{yl:.3}" y="{top}" font-size="12" text-anchor="end">{y_hi:.4}</text>
<text x="{yl:.3}" y="{bottom}" font-size="12" text-anchor="end">{y_lo:.4}</text>
<text x="14" y="{yc:.3}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {yc:.3})">rate [bits per round]</text>
</svg>
"##,
        xl = bottom + 16.0,
        xt = bottom + 36.0,
        xc = WIDTH / 2.0,
        yl = left - 6.0,
        yc = HEIGHT / 2.0,
    )
}
