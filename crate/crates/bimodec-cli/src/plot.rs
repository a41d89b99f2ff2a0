//! Minimal SVG bar-chart renderer for the report CSV tables. No drawing
//! dependency: charts are assembled as plain SVG strings from parsed CSV
//! rows, so a report directory is self-describing (CSV) and viewable (SVG)
//! with nothing but a browser.

use bimodec::{Error, Result};

const PALETTE: [&str; 6] = [
    "#2f6db3", "#9ec3e6", "#c24f38", "#eaa795", "#4f9459", "#b5d6ae",
];
const BAR_W: f64 = 26.0;
const BAR_GAP: f64 = 5.0;
const GROUP_GAP: f64 = 34.0;
const PLOT_H: f64 = 260.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 58.0;

#[derive(Debug, Clone)]
pub struct Bar {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BarGroup {
    pub label: String,
    pub bars: Vec<Bar>,
}

/// Split CSV text into header and rows. Fields in our tables never contain
/// commas or quotes, so a plain split is exact.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "CSV row {} has {} fields, header has {}",
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Config(format!("CSV missing column {name:?}")))
}

/// Tick step of roughly (hi-lo)/6 snapped to a 1/2/5 decade.
fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.abs().log10().floor());
    let r = raw / mag;
    let snapped = if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    };
    snapped * mag
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bar chart as a standalone SVG document.
pub fn bar_chart(title: &str, y_label: &str, groups: &[BarGroup]) -> Result<String> {
    if groups.is_empty() || groups.iter().any(|g| g.bars.is_empty()) {
        return Err(Error::Config("bar chart needs at least one bar per group".into()));
    }
    let values: Vec<f64> = groups.iter().flat_map(|g| g.bars.iter().map(|b| b.value)).collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            context: "bar chart",
            reason: format!("non-finite bar value {bad}"),
        });
    }
    let mut lo = values.iter().cloned().fold(0.0f64, f64::min);
    let mut hi = values.iter().cloned().fold(0.0f64, f64::max);
    if hi - lo < 1e-9 {
        hi += 1.0;
    }
    let pad = 0.07 * (hi - lo);
    if lo < 0.0 {
        lo -= pad;
    }
    hi += pad;
    let step = nice_step(hi - lo);
    let y_of = |v: f64| MARGIN_T + PLOT_H * (hi - v) / (hi - lo);

    let group_w = |g: &BarGroup| g.bars.len() as f64 * (BAR_W + BAR_GAP) - BAR_GAP;
    let plot_w: f64 =
        groups.iter().map(group_w).sum::<f64>() + GROUP_GAP * (groups.len() as f64 + 1.0);
    let legend: Vec<&str> = groups[0].bars.iter().map(|b| b.label.as_str()).collect();
    let legend_h = 18.0 * legend.len() as f64;
    let width = MARGIN_L + plot_w + 150.0;
    let height = MARGIN_T + PLOT_H + MARGIN_B.max(legend_h);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        MARGIN_L,
        esc(title)
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {0:.1})\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_T + PLOT_H / 2.0,
        esc(y_label)
    ));

    // Gridlines and tick labels.
    let first_tick = (lo / step).ceil() * step;
    let mut tick = first_tick;
    while tick <= hi + 1e-9 * step {
        let y = y_of(tick);
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_L,
            MARGIN_L + plot_w
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0,
            trim_num(tick)
        ));
        tick += step;
    }
    // Zero axis emphasized when visible.
    if lo < 0.0 && hi > 0.0 {
        let y = y_of(0.0);
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#555\"/>\n",
            MARGIN_L,
            MARGIN_L + plot_w
        ));
    }

    let mut x = MARGIN_L + GROUP_GAP;
    for g in groups {
        for (bi, b) in g.bars.iter().enumerate() {
            let color = PALETTE[bi % PALETTE.len()];
            let y0 = y_of(b.value.max(0.0));
            let y1 = y_of(b.value.min(0.0));
            let bx = x + bi as f64 * (BAR_W + BAR_GAP);
            s.push_str(&format!(
                "<rect x=\"{bx:.1}\" y=\"{y0:.1}\" width=\"{BAR_W:.1}\" height=\"{:.1}\" fill=\"{color}\"/>\n",
                (y1 - y0).max(0.5)
            ));
            s.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
                bx + BAR_W / 2.0,
                y0 - 3.0,
                trim_num((b.value * 10.0).round() / 10.0)
            ));
        }
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x + group_w(g) / 2.0,
            MARGIN_T + PLOT_H + 18.0,
            esc(&g.label)
        ));
        x += group_w(g) + GROUP_GAP;
    }

    // Legend (bar labels shared across groups).
    let lx = MARGIN_L + plot_w + 16.0;
    for (i, label) in legend.iter().enumerate() {
        let ly = MARGIN_T + 18.0 * i as f64;
        s.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            ly,
            PALETTE[i % PALETTE.len()]
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            lx + 17.0,
            ly + 10.0,
            esc(label)
        ));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn trim_num(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v}")
    }
}

/// FVAF chart from the accuracy CSV
/// (`model,modality,hand,kind,fvaf`): one group per model/modality, four
/// bars (own and crossed per hand).
pub fn fvaf_chart_from_csv(csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(csv)?;
    let (im, imo, ih, ik, iv) = (
        column(&header, "model")?,
        column(&header, "modality")?,
        column(&header, "hand")?,
        column(&header, "kind")?,
        column(&header, "fvaf")?,
    );
    let mut groups: Vec<BarGroup> = Vec::new();
    for row in rows {
        let glabel = format!("{} {}", row[im], row[imo]);
        let blabel = format!("{} {}", row[ih], row[ik]);
        let value: f64 = row[iv]
            .parse()
            .map_err(|_| Error::Config(format!("bad fvaf value {:?}", row[iv])))?;
        match groups.iter_mut().find(|g| g.label == glabel) {
            Some(g) => g.bars.push(Bar { label: blabel, value }),
            None => groups.push(BarGroup {
                label: glabel,
                bars: vec![Bar { label: blabel, value }],
            }),
        }
    }
    bar_chart("Decoding accuracy on held-out trials", "FVAF [%]", &groups)
}

/// Sensitivity chart from the analysis CSV
/// (`group,percent_change,...`): one bar per feature group. Falls back to
/// raw FVAF drops when the percent normalization was degenerate.
pub fn sensitivity_chart_from_csv(csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(csv)?;
    let ig = column(&header, "group")?;
    let ipc = column(&header, "percent_change")?;
    let idrop = column(&header, "raw_drop")?;
    let use_pc = rows.iter().any(|r| !r[ipc].is_empty());
    let mut bars = Vec::new();
    for row in &rows {
        let cell = if use_pc { &row[ipc] } else { &row[idrop] };
        if cell.is_empty() {
            continue;
        }
        let value: f64 = cell
            .parse()
            .map_err(|_| Error::Config(format!("bad sensitivity value {cell:?}")))?;
        bars.push(BarGroup {
            label: row[ig].clone(),
            bars: vec![Bar { label: "shuffled".into(), value }],
        });
    }
    let y = if use_pc { "performance change [%]" } else { "FVAF drop" };
    bar_chart("Feature-group sensitivity (temporal shuffling)", y, &bars)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg_from_fvaf_csv() {
        let csv = "model,modality,hand,kind,fvaf\n\
                   linear,both,left,own,63.2\n\
                   linear,both,left,crossed,40.1\n\
                   linear,both,right,own,61.0\n\
                   linear,both,right,crossed,-12.5\n";
        let svg = fvaf_chart_from_csv(csv).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 4 + 4); // bars + legend keys
        assert!(svg.contains("linear both"));
        assert!(svg.contains("FVAF [%]"));
    }

    #[test]
    fn sensitivity_chart_prefers_percent_change() {
        let csv = "group,fvaf_mean,fvaf_std,percent_change,raw_drop\n\
                   none,50,0,0,0\n\
                   fnirs,10,1,95.5,40\n\
                   all,8,1,100,42\n";
        let svg = sensitivity_chart_from_csv(csv).unwrap();
        assert!(svg.contains("performance change"));
        let degenerate = "group,fvaf_mean,fvaf_std,percent_change,raw_drop\n\
                          none,50,0,,0\n\
                          all,50,0,,0\n";
        let svg = sensitivity_chart_from_csv(degenerate).unwrap();
        assert!(svg.contains("FVAF drop"));
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("a,b\n1\n").is_err());
        let missing = "model,modality\nlinear,both\n";
        assert!(fvaf_chart_from_csv(missing).is_err());
    }

    #[test]
    fn tick_steps_are_decade_snapped() {
        for (span, want) in [(60.0, 10.0), (12.0, 2.0), (30.0, 5.0), (4.0, 0.5), (110.0, 20.0)] {
            assert_eq!(nice_step(span), want, "span {span}");
        }
    }
}
