//! QGIS 3 project document for a result bundle.
//!
//! Only the subset QGIS needs to open the layers with a fixed RGB stretch is
//! emitted. Output is a pure function of the inputs.

use std::fmt::Write;

use fieldbabel_core::analytics::RatioMode;
use serde::{Deserialize, Serialize};

/// Display stretch `[min, max]` per composite band, in dB (ratio bands are
/// unitless for the quotient mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorRanges {
    pub vv: [f64; 2],
    pub vh: [f64; 2],
    pub db_quotient: [f64; 2],
    pub db_difference: [f64; 2],
}

impl Default for ColorRanges {
    fn default() -> Self {
        Self { vv: [-25.0, 0.0], vh: [-32.0, -5.0], db_quotient: [0.2, 1.0], db_difference: [0.0, 15.0] }
    }
}

impl ColorRanges {
    pub fn ratio(&self, mode: RatioMode) -> [f64; 2] {
        match mode {
            RatioMode::DbQuotient => self.db_quotient,
            RatioMode::DbDifference => self.db_difference,
        }
    }

    /// `[vv, vh, ratio]` in band order.
    pub fn bands(&self, mode: RatioMode) -> [[f64; 2]; 3] {
        [self.vv, self.vh, self.ratio(mode)]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, [lo, hi]) in
            [("vv", self.vv), ("vh", self.vh), ("db_quotient", self.db_quotient), ("db_difference", self.db_difference)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("color range {name} = [{lo}, {hi}] must be finite and increasing"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerRole {
    /// Three-band VV / VH / ratio composite.
    Composite,
    Parcels,
    /// Delimited-text table without geometry.
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectLayer {
    /// Bundle-relative path with forward slashes, e.g. `scenes/x.tif`.
    pub path: String,
    pub name: String,
    pub role: LayerRole,
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn unesc(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn layer_id(i: usize, layer: &ProjectLayer) -> String {
    let stem: String =
        layer.name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("{stem}_{i:03}")
}

fn datasource(layer: &ProjectLayer) -> String {
    match layer.role {
        LayerRole::Table => format!("file:./{}?type=csv&geomType=none&detectTypes=yes", layer.path),
        _ => format!("./{}", layer.path),
    }
}

/// Render the project. `crs` is the EPSG code of the raster layers; the
/// parcel layer is in lon/lat.
pub fn build_project_descriptor(
    title: &str,
    crs: u32,
    layers: &[ProjectLayer],
    ranges: &ColorRanges,
    mode: RatioMode,
) -> String {
    let mut x = String::new();
    let w = &mut x;
    let _ = writeln!(w, "<!DOCTYPE qgis PUBLIC 'http://mrcc.com/qgis.dtd' 'SYSTEM'>");
    let _ = writeln!(w, r#"<qgis projectname="{}" version="3.28.0-Firenze">"#, esc(title));
    let _ = writeln!(w, "  <title>{}</title>", esc(title));
    let _ = writeln!(w, "  <projectCrs>");
    srs(w, "    ", crs);
    let _ = writeln!(w, "  </projectCrs>");

    let _ = writeln!(w, r#"  <layer-tree-group expanded="1" checked="Qt::Checked" name="">"#);
    for (i, l) in layers.iter().enumerate() {
        let _ = writeln!(
            w,
            r#"    <layer-tree-layer id="{}" name="{}" source="{}" providerKey="{}" checked="Qt::Checked" expanded="1"/>"#,
            layer_id(i, l),
            esc(&l.name),
            esc(&datasource(l)),
            provider(l),
        );
    }
    let _ = writeln!(w, "  </layer-tree-group>");

    let _ = writeln!(w, "  <projectlayers>");
    for (i, l) in layers.iter().enumerate() {
        match l.role {
            LayerRole::Composite => {
                let _ = writeln!(w, r#"    <maplayer type="raster">"#);
                common(w, i, l);
                srs_block(w, crs);
                let _ = writeln!(
                    w,
                    r#"      <pipe>
        <rasterrenderer type="multibandcolor" opacity="1" alphaBand="-1" redBand="1" greenBand="2" blueBand="3">"#
                );
                for (tag, [lo, hi]) in ["red", "green", "blue"].iter().zip(ranges.bands(mode)) {
                    let _ = writeln!(
                        w,
                        "          <{tag}ContrastEnhancement><minValue>{lo}</minValue><maxValue>{hi}</maxValue><algorithm>StretchToMinimumMaximum</algorithm></{tag}ContrastEnhancement>"
                    );
                }
                let _ = writeln!(w, "        </rasterrenderer>\n      </pipe>");
            }
            LayerRole::Parcels => {
                let _ = writeln!(w, r#"    <maplayer type="vector" geometry="Polygon">"#);
                common(w, i, l);
                srs_block(w, 4326);
            }
            LayerRole::Table => {
                let _ = writeln!(w, r#"    <maplayer type="vector" geometry="No geometry">"#);
                common(w, i, l);
            }
        }
        let _ = writeln!(w, "    </maplayer>");
    }
    let _ = writeln!(w, "  </projectlayers>");
    let _ = writeln!(
        w,
        r#"  <properties>
    <Paths><Absolute type="bool">false</Absolute></Paths>
  </properties>
</qgis>"#
    );
    x
}

fn provider(l: &ProjectLayer) -> &'static str {
    match l.role {
        LayerRole::Composite => "gdal",
        LayerRole::Parcels => "ogr",
        LayerRole::Table => "delimitedtext",
    }
}

fn common(w: &mut String, i: usize, l: &ProjectLayer) {
    let _ = writeln!(w, "      <id>{}</id>", layer_id(i, l));
    let _ = writeln!(w, "      <datasource>{}</datasource>", esc(&datasource(l)));
    let _ = writeln!(w, "      <layername>{}</layername>", esc(&l.name));
    let _ = writeln!(w, "      <provider>{}</provider>", provider(l));
}

fn srs_block(w: &mut String, crs: u32) {
    let _ = writeln!(w, "      <srs>");
    srs(w, "        ", crs);
    let _ = writeln!(w, "      </srs>");
}

fn srs(w: &mut String, indent: &str, crs: u32) {
    let _ = writeln!(w, "{indent}<spatialrefsys><authid>EPSG:{crs}</authid></spatialrefsys>");
}

/// Bundle-relative paths the document points at, in document order.
pub fn referenced_paths(doc: &str) -> Vec<String> {
    doc.lines()
        .filter_map(|l| {
            let s = l.trim().strip_prefix("<datasource>")?.strip_suffix("</datasource>")?;
            let s = unesc(s);
            let s = s.strip_prefix("file:").unwrap_or(&s);
            let s = s.split('?').next().unwrap_or(s);
            Some(s.trim_start_matches("./").to_string())
        })
        .collect()
}
