use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::spec::{LayerGroup, ModelSpec, VariantKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub shape: Vec<usize>,
    pub count: u64,
    pub group: LayerGroup,
}

/// A signed contribution to the gap between the computed and reference totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualItem {
    pub label: String,
    pub count: i64,
}

/// Per-layer parameter accounting for one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub variant: VariantKind,
    pub input_height: usize,
    pub input_width: usize,
    pub rows: Vec<ParamRow>,
    pub groups: Vec<(LayerGroup, u64)>,
    pub batchnorm_affine: u64,
    pub total: u64,
    /// Reference total; only set when the spec is the reference configuration.
    pub reference: Option<u64>,
    pub residual: Option<i64>,
    /// Items summing exactly to `residual`.
    pub residual_items: Vec<ResidualItem>,
}

pub fn param_report(spec: &ModelSpec) -> ParamReport {
    let rows: Vec<ParamRow> = spec
        .layout()
        .into_iter()
        .map(|s| ParamRow {
            count: s.numel() as u64,
            name: s.name,
            shape: s.shape,
            group: s.group,
        })
        .collect();
    let total: u64 = rows.iter().map(|r| r.count).sum();
    let mut groups: Vec<(LayerGroup, u64)> = Vec::new();
    for r in &rows {
        match groups.iter_mut().find(|(g, _)| *g == r.group) {
            Some((_, c)) => *c += r.count,
            None => groups.push((r.group, r.count)),
        }
    }
    let batchnorm_affine = rows
        .iter()
        .filter(|r| (r.name.ends_with(".gamma") || r.name.ends_with(".beta")) && r.name.contains(".bn"))
        .map(|r| r.count)
        .sum();

    let at_reference = *spec == ModelSpec::reference(spec.variant);
    let reference = at_reference.then(|| spec.variant.reference_param_count());
    let residual = reference.map(|r| total as i64 - r as i64);
    let residual_items = match residual {
        Some(res) => residual_items(spec.variant, &groups, batchnorm_affine, total, res),
        None => Vec::new(),
    };
    ParamReport {
        variant: spec.variant,
        input_height: spec.input_height,
        input_width: spec.input_width,
        rows,
        groups,
        batchnorm_affine,
        total,
        reference,
        residual,
        residual_items,
    }
}

fn residual_items(
    variant: VariantKind,
    groups: &[(LayerGroup, u64)],
    bn: u64,
    total: u64,
    residual: i64,
) -> Vec<ResidualItem> {
    let group = |g: LayerGroup| groups.iter().find(|(k, _)| *k == g).map_or(0, |(_, c)| *c) as i64;
    let bn = bn as i64;
    let mut items = vec![ResidualItem {
        label: "batch-norm scale/shift (not in the reference U-Net count)".into(),
        count: bn,
    }];
    let unet_ref = VariantKind::Unet.reference_param_count() as i64;
    match variant {
        VariantKind::Unet => items.push(ResidualItem {
            label: "convolutional trunk vs reference".into(),
            count: residual - bn,
        }),
        VariantKind::MhsaNope | VariantKind::MhsaPe => {
            let attention = group(LayerGroup::Attention) + group(LayerGroup::PositionalEmbedding);
            let trunk = total as i64 - bn - attention;
            let increment = variant.reference_param_count() as i64 - unet_ref;
            items.push(ResidualItem {
                label: "convolutional trunk vs reference U-Net".into(),
                count: trunk - unet_ref,
            });
            items.push(ResidualItem {
                label: format!(
                    "attention stage ({attention}) vs reference increment over U-Net ({increment})"
                ),
                count: attention - increment,
            });
        }
        VariantKind::Edgeattnet => items.push(ResidualItem {
            label: "trunk, attention and edge branch vs reference".into(),
            count: residual - bn,
        }),
    }
    items
}

impl ParamReport {
    pub fn reduction_vs(&self, other: &ParamReport) -> f64 {
        self.total as f64 / other.total as f64
    }

    /// Fixed-width text table: one row per tensor, then group subtotals,
    /// total and residual items.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} ({}x{} input)",
            self.variant, self.input_height, self.input_width
        );
        let _ = writeln!(out, "  {:<34} {:<20} {:>12}", "parameter", "shape", "count");
        for r in &self.rows {
            let shape = r
                .shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            let _ = writeln!(out, "  {:<34} {:<20} {:>12}", r.name, shape, group_digits(r.count as i64));
        }
        for (g, c) in &self.groups {
            let _ = writeln!(out, "  subtotal {:<45} {:>12}", format!("{g:?}"), group_digits(*c as i64));
        }
        let _ = writeln!(out, "  {:<54} {:>12}", "batch-norm affine (included)", group_digits(self.batchnorm_affine as i64));
        let _ = writeln!(out, "  {:<54} {:>12}", "TOTAL", group_digits(self.total as i64));
        if let (Some(r), Some(res)) = (self.reference, self.residual) {
            let _ = writeln!(out, "  {:<54} {:>12}", "reference total", group_digits(r as i64));
            let _ = writeln!(out, "  {:<54} {:>12}", "residual", signed(res));
            for item in &self.residual_items {
                let _ = writeln!(out, "    {:<52} {:>12}", item.label, signed(item.count));
            }
        }
        out
    }
}

fn signed(v: i64) -> String {
    if v > 0 {
        format!("+{}", group_digits(v))
    } else {
        group_digits(v)
    }
}

pub(crate) fn group_digits(v: i64) -> String {
    let digits = v.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if v < 0 {
        format!("-{out}")
    } else {
        out
    }
}
