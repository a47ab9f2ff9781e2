//! Self-contained SVG line chart of RMSE against subsample size.

/// Renders one polyline per estimator. `series` pairs a label with the RMSE
/// at each subsample size in `ns`; missing points are not supported.
pub fn rmse_chart_svg(ns: &[usize], series: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 760.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 180.0;
    const MT: f64 = 30.0;
    const MB: f64 = 55.0;
    const PALETTE: [&str; 9] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
        "#bcbd22",
    ];

    let xmin = ns.first().copied().unwrap_or(0) as f64;
    let xmax = ns.last().copied().unwrap_or(1) as f64;
    let ymax = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let xspan = (xmax - xmin).max(1.0);

    let px = |n: f64| ML + (n - xmin) / xspan * (W - ML - MR);
    let py = |r: f64| H - MB - (r / ymax) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{ML}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        y0 = H - MB,
        x1 = W - MR,
    ));

    for &n in ns {
        let x = px(n as f64);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y0}\" x2=\"{x:.2}\" y2=\"{y1}\" stroke=\"black\"/>\n\
             <text x=\"{x:.2}\" y=\"{yt}\" text-anchor=\"middle\">{n}</text>\n",
            y0 = H - MB,
            y1 = H - MB + 5.0,
            yt = H - MB + 20.0,
        ));
    }
    for k in 0..=4 {
        let r = ymax * k as f64 / 4.0;
        let y = py(r);
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{ML}\" y2=\"{y:.2}\" stroke=\"black\"/>\n\
             <text x=\"{xt}\" y=\"{yt:.2}\" text-anchor=\"end\">{r:.4}</text>\n",
            x0 = ML - 5.0,
            xt = ML - 8.0,
            yt = y + 4.0,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{xc}\" y=\"{yb}\" text-anchor=\"middle\">expected subsample size n</text>\n\
         <text x=\"18\" y=\"{yc}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {yc})\">RMSE</text>\n",
        xc = ML + (W - ML - MR) / 2.0,
        yb = H - 12.0,
        yc = MT + (H - MT - MB) / 2.0,
    ));

    for (s, (label, values)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let points: Vec<String> = ns
            .iter()
            .zip(values)
            .map(|(&n, &r)| format!("{:.2},{:.2}", px(n as f64), py(r)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let ly = MT + 18.0 * s as f64;
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{ly:.2}\" x2=\"{x1}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{xt}\" y=\"{yt:.2}\">{label}</text>\n",
            x0 = W - MR + 10.0,
            x1 = W - MR + 34.0,
            xt = W - MR + 40.0,
            yt = ly + 4.0,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
