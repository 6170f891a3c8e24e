//! Minimal SVG emitter for static figures: axes, polylines, filled regions,
//! markers and arrows in data coordinates.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Dot,
    TriangleUp,
    TriangleDown,
    Cross,
}

#[derive(Debug, Clone)]
pub struct Plot {
    width: f64,
    height: f64,
    margin: f64,
    x: (f64, f64),
    y: (f64, f64),
    title: String,
    x_label: String,
    y_label: String,
    body: String,
    legend: Vec<(String, String)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            width: 640.0,
            height: 520.0,
            margin: 60.0,
            x,
            y,
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            body: String::new(),
            legend: Vec::new(),
        }
    }

    pub fn title(mut self, t: &str) -> Self {
        self.title = t.to_string();
        self
    }

    pub fn labels(mut self, x: &str, y: &str) -> Self {
        self.x_label = x.to_string();
        self.y_label = y.to_string();
        self
    }

    fn px(&self, x: f64) -> f64 {
        self.margin + (x - self.x.0) / (self.x.1 - self.x.0) * (self.width - 2.0 * self.margin)
    }

    fn py(&self, y: f64) -> f64 {
        self.height - self.margin - (y - self.y.0) / (self.y.1 - self.y.0) * (self.height - 2.0 * self.margin)
    }

    fn path(&self, pts: &[[f64; 2]], close: bool) -> String {
        let mut d = String::new();
        for (k, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, self.px(p[0]), self.py(p[1]));
        }
        if close {
            d.push('Z');
        }
        d
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, width: f64, dash: Option<&str>) {
        if pts.len() < 2 {
            return;
        }
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<path d=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"{dash}/>",
            self.path(pts, false).trim_end()
        );
    }

    /// Filled region bounded by closed rings (even-odd rule).
    pub fn region(&mut self, rings: &[Vec<[f64; 2]>], fill: &str, opacity: f64) {
        let d: String = rings.iter().filter(|r| r.len() > 2).map(|r| self.path(r, true)).collect();
        if d.is_empty() {
            return;
        }
        let _ = writeln!(
            self.body,
            "<path d=\"{d}\" fill=\"{fill}\" fill-opacity=\"{opacity}\" fill-rule=\"evenodd\" stroke=\"none\"/>"
        );
    }

    pub fn rect(&mut self, lo: [f64; 2], hi: [f64; 2], stroke: &str, dash: Option<&str>) {
        let ring = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]], lo];
        self.polyline(&ring, stroke, 1.0, dash);
    }

    pub fn marker(&mut self, p: [f64; 2], shape: Marker, color: &str, size: f64) {
        let (cx, cy) = (self.px(p[0]), self.py(p[1]));
        let s = size;
        let _ = match shape {
            Marker::Dot => writeln!(self.body, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"{color}\"/>", s / 2.0),
            Marker::TriangleUp => writeln!(
                self.body,
                "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"{color}\"/>",
                cx,
                cy - s,
                cx - s,
                cy + s * 0.7,
                cx + s,
                cy + s * 0.7
            ),
            Marker::TriangleDown => writeln!(
                self.body,
                "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"{color}\"/>",
                cx,
                cy + s,
                cx - s,
                cy - s * 0.7,
                cx + s,
                cy - s * 0.7
            ),
            Marker::Cross => writeln!(
                self.body,
                "<path d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"{color}\"/>",
                cx - s,
                cy - s,
                cx + s,
                cy + s,
                cx - s,
                cy + s,
                cx + s,
                cy - s
            ),
        };
    }

    /// Arrow from `p` along `v` (data units); `v` is drawn as given.
    pub fn arrow(&mut self, p: [f64; 2], v: [f64; 2], color: &str) {
        let (x0, y0) = (self.px(p[0]), self.py(p[1]));
        let (x1, y1) = (self.px(p[0] + v[0]), self.py(p[1] + v[1]));
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-9 {
            return;
        }
        let (ux, uy) = (dx / len, dy / len);
        let head = (0.35 * len).min(5.0);
        let (hx1, hy1) = (x1 - head * (ux + 0.5 * uy), y1 - head * (uy - 0.5 * ux));
        let (hx2, hy2) = (x1 - head * (ux - 0.5 * uy), y1 - head * (uy + 0.5 * ux));
        let _ = writeln!(
            self.body,
            "<path d=\"M{x0:.2},{y0:.2} L{x1:.2},{y1:.2} M{hx1:.2},{hy1:.2} L{x1:.2},{y1:.2} L{hx2:.2},{hy2:.2}\" \
             fill=\"none\" stroke=\"{color}\" stroke-width=\"0.8\"/>"
        );
    }

    pub fn legend(&mut self, label: &str, color: &str) {
        self.legend.push((label.to_string(), color.to_string()));
    }

    fn ticks(lo: f64, hi: f64) -> Vec<f64> {
        let span = hi - lo;
        let raw = span / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut t = (lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= hi + 1e-9 * span {
            out.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
            t += step;
        }
        out
    }

    pub fn render(&self) -> String {
        let (w, h, m) = (self.width, self.height, self.margin);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(s, "<defs><clipPath id=\"plot\"><rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\"/></clipPath></defs>", w - 2.0 * m, h - 2.0 * m);
        let _ = writeln!(s, "<g clip-path=\"url(#plot)\">");
        s.push_str(&self.body);
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            w - 2.0 * m,
            h - 2.0 * m
        );
        for t in Self::ticks(self.x.0, self.x.1) {
            let x = self.px(t);
            let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", h - m, h - m + 5.0);
            let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", h - m + 18.0, fmt_tick(t));
        }
        for t in Self::ticks(self.y.0, self.y.1) {
            let y = self.py(t);
            let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{m:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>", m - 5.0);
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", m - 8.0, y + 4.0, fmt_tick(t));
        }
        if !self.title.is_empty() {
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, m / 2.0, esc(&self.title));
        }
        if !self.x_label.is_empty() {
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", w / 2.0, h - 15.0, esc(&self.x_label));
        }
        if !self.y_label.is_empty() {
            let _ = writeln!(
                s,
                "<text x=\"15\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.2})\">{}</text>",
                h / 2.0,
                h / 2.0,
                esc(&self.y_label)
            );
        }
        for (k, (label, color)) in self.legend.iter().enumerate() {
            let y = m + 16.0 + 16.0 * k as f64;
            let x = w - m - 150.0;
            let _ = writeln!(s, "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>", y - 9.0);
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>", x + 14.0, esc(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}
