use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::write_text;
use crate::volume::PhaseMask;
use crate::{Error, Result};

/// What [`report`] produced and which inputs it looked for but did not find.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSummary {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

type Table = Vec<Vec<String>>;
type Scale = Box<dyn Fn(&str) -> f64>;

fn read_csv(path: &Path) -> Result<(Vec<String>, Table)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty csv"))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let rows: Table = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    if let Some(r) = rows.iter().find(|r| r.len() != header.len()) {
        return Err(Error::format(path, format!("row has {} fields, header has {}", r.len(), header.len())));
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::format(path, format!("missing column {name:?}")))
}

fn files_matching(dir: &Path, prefix: &str, suffix: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix) && n.ends_with(suffix))
        })
        .collect();
    out.sort();
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn parse(v: &str) -> f64 {
    v.parse().unwrap_or(f64::NAN)
}

/// Vertical bar chart of values in [0, 1].
fn bar_chart_svg(title: &str, bars: &[(String, f64)]) -> String {
    let (w, h, pad) = (80 * bars.len().max(1) + 80, 320, 40);
    let plot_h = (h - 2 * pad) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(s, "<text x=\"{pad}\" y=\"20\" font-size=\"13\">{}</text>", esc(title));
    let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", h - pad, w - pad / 2, h - pad);
    for (i, (label, v)) in bars.iter().enumerate() {
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        let bh = v * plot_h;
        let x = pad + 10 + 80 * i;
        let _ = writeln!(
            s,
            "<rect x=\"{x}\" y=\"{:.2}\" width=\"60\" height=\"{bh:.2}\" fill=\"#4477aa\"/>",
            (h - pad) as f64 - bh
        );
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\">{}</text>", h - pad + 14, esc(label));
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{:.2}\">{v:.3}</text>", (h - pad) as f64 - bh - 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Parallel-coordinates plot; categorical axes are spaced by sorted distinct value.
fn parallel_svg(header: &[String], rows: &Table) -> String {
    let axes = header.len();
    let (w, h, pad) = (160 * axes, 360, 40);
    let plot_h = (h - 2 * pad) as f64;
    let mut scales: Vec<Scale> = Vec::new();
    for a in 0..axes {
        let vals: Vec<&str> = rows.iter().map(|r| r[a].as_str()).collect();
        if vals.iter().all(|v| v.parse::<f64>().is_ok()) {
            let nums: Vec<f64> = vals.iter().map(|v| parse(v)).collect();
            let last = a + 1 == axes;
            let (lo, hi) = if last {
                (0.0, 1.0)
            } else {
                let logs: Vec<f64> = nums.iter().map(|v| v.abs().max(1e-300).log10()).collect();
                (logs.iter().cloned().fold(f64::INFINITY, f64::min), logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            };
            let span = if hi > lo { hi - lo } else { 1.0 };
            scales.push(Box::new(move |v: &str| {
                let x = parse(v);
                let t = if last { x } else { x.abs().max(1e-300).log10() };
                ((t - lo) / span).clamp(0.0, 1.0)
            }));
        } else {
            let mut cats: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            cats.sort();
            cats.dedup();
            let n = cats.len();
            scales.push(Box::new(move |v: &str| {
                let i = cats.iter().position(|c| c == v).unwrap_or(0);
                if n > 1 {
                    i as f64 / (n - 1) as f64
                } else {
                    0.5
                }
            }));
        }
    }
    let x_of = |a: usize| (pad + 160 * a) as f64;
    let y_of = |t: f64| (h - pad) as f64 - t * plot_h;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (a, name) in header.iter().enumerate() {
        let x = x_of(a);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{pad}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>", h - pad);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\">{}</text>", x - 10.0, pad - 10, esc(name));
    }
    for r in rows {
        let pts: Vec<String> =
            (0..axes).map(|a| format!("{:.2},{:.2}", x_of(a), y_of(scales[a](&r[a])))).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#aa3377\" stroke-opacity=\"0.5\"/>", pts.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the mask as a legacy-VTK structured-points file (1 inside, 0 outside).
pub fn export_vtk(path: impl AsRef<Path>, mask: &PhaseMask, title: &str) -> Result<()> {
    let [nx, ny, nz] = mask.dims();
    let h = mask.spacing();
    let mut s = String::with_capacity(mask.len() * 2 + 256);
    let _ = write!(
        s,
        "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS {nx} {ny} {nz}\nORIGIN {o} {o} {o}\nSPACING {h} {h} {h}\nPOINT_DATA {}\nSCALARS phase unsigned_char 1\nLOOKUP_TABLE default\n",
        title.replace('\n', " "),
        mask.len(),
        o = h / 2.0,
    );
    for row in mask.data().chunks(nx) {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    write_text(path.as_ref(), &s)
}

fn repr_sweep_report(src: &Path, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let (header, rows) = read_csv(src)?;
    let (ds, repr, kind, dice, hd, flags) = (
        column(&header, "dataset", src)?,
        column(&header, "representation", src)?,
        column(&header, "kind", src)?,
        column(&header, "dice", src)?,
        column(&header, "hausdorff_norm", src)?,
        column(&header, "flags", src)?,
    );
    let mut by_ds: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
    let mut csv = String::from("dataset,representation,mean_dice,mean_hausdorff,status\n");
    for r in rows.iter().filter(|r| r[kind] == "aggregate") {
        let _ = writeln!(csv, "{},{},{},{},{}", r[ds], r[repr], r[dice], r[hd], r[flags]);
        by_ds.entry(&r[ds]).or_default().push((r[repr].clone(), parse(&r[dice])));
    }
    let path = out.join("repr_summary.csv");
    write_text(&path, &csv)?;
    written.push(path);
    for (name, bars) in by_ds {
        let path = out.join(format!("repr_dice_{name}.svg"));
        write_text(&path, &bar_chart_svg(&format!("mean test dice, {name}"), &bars))?;
        written.push(path);
        let get = |l: &str| bars.iter().find(|b| b.0 == l).map(|b| b.1);
        if let (Some(sharp), Some(sdf)) = (get("sharp"), get("sdf")) {
            let verdict = if sharp > sdf { "holds" } else { "does not hold" };
            let path = out.join(format!("trend_{name}.txt"));
            write_text(&path, &format!("dataset {name}: dice(sharp) = {sharp:.6}, dice(sdf) = {sdf:.6}; sharp > sdf {verdict}\n"))?;
            written.push(path);
        }
    }
    Ok(())
}

fn grid_report(dir: &Path, out: &Path, written: &mut Vec<PathBuf>, missing: &mut Vec<String>) -> Result<()> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("grid_search").to_string();
    let par = dir.join("parallel_coords.csv");
    if !par.is_file() {
        missing.push(format!("{name}/parallel_coords.csv"));
        return Ok(());
    }
    let (header, rows) = read_csv(&par)?;
    let path = out.join(format!("{name}_parallel.svg"));
    write_text(&path, &parallel_svg(&header, &rows))?;
    written.push(path);
    for f in ["top5.csv", "expectations.txt"] {
        let src = dir.join(f);
        if src.is_file() {
            let text = fs::read_to_string(&src).map_err(|e| Error::io(&src, e))?;
            let path = out.join(format!("{name}_{f}"));
            write_text(&path, &text)?;
            written.push(path);
        } else {
            missing.push(format!("{name}/{f}"));
        }
    }
    Ok(())
}

fn uncertainty_report(src: &Path, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let (header, rows) = read_csv(src)?;
    let (repr, metric, std) =
        (column(&header, "representation", src)?, column(&header, "metric", src)?, column(&header, "std", src)?);
    let mut text = String::new();
    for r in rows.iter().filter(|r| r[metric] == "dice") {
        let s = parse(&r[std]);
        let order = if s > 0.0 { s.log10().floor() as i32 } else { i32::MIN };
        let cmp = match order {
            -3 => "same order of magnitude as",
            o if o < -3 => "smaller than",
            _ => "larger than",
        };
        let _ = writeln!(text, "{}: std(dice) = {s:.6}, {cmp} the 0.004 seed spread of the full-scale runs", r[repr]);
    }
    let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("uncertainty");
    let path = out.join(format!("{stem}_note.txt"));
    write_text(&path, &text)?;
    written.push(path);
    Ok(())
}

fn cross_report(src: &Path, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let (header, rows) = read_csv(src)?;
    let (repr, tr, te, dice) = (
        column(&header, "representation", src)?,
        column(&header, "train_dataset", src)?,
        column(&header, "test_dataset", src)?,
        column(&header, "mean_dice", src)?,
    );
    let mut by_repr: BTreeMap<&str, BTreeMap<(&str, &str), &str>> = BTreeMap::new();
    for r in &rows {
        by_repr.entry(&r[repr]).or_default().insert((&r[tr], &r[te]), &r[dice]);
    }
    let mut text = String::new();
    for (label, cells) in &by_repr {
        let mut names: Vec<&str> = cells.keys().flat_map(|(a, b)| [*a, *b]).collect();
        names.sort();
        names.dedup();
        let _ = writeln!(text, "{label}");
        let _ = writeln!(text, "train\\test,{}", names.join(","));
        let mut diag_ok = true;
        for a in &names {
            let vals: Vec<&str> = names.iter().map(|b| cells.get(&(*a, *b)).copied().unwrap_or("NaN")).collect();
            let _ = writeln!(text, "{a},{}", vals.join(","));
            for b in &names {
                let own = cells.get(&(*b, *b)).map_or(f64::NAN, |v| parse(v));
                if a != b && parse(cells.get(&(*a, *b)).copied().unwrap_or("NaN")) > own {
                    diag_ok = false;
                }
            }
        }
        let _ = writeln!(text, "diagonal >= off-diagonal: {}\n", if diag_ok { "observed" } else { "not observed" });
    }
    let path = out.join("cross_eval_matrix.txt");
    write_text(&path, &text)?;
    written.push(path);
    Ok(())
}

/// Collects sweep outputs under `results` into `results/report`: summary tables,
/// SVG charts and notes, plus a VTK export of each volume in `vtk_volumes`.
/// Missing inputs are listed in `report/manifest.txt` and the rest is still produced.
pub fn report(results: &Path, vtk_volumes: &[PathBuf]) -> Result<ReportSummary> {
    let out = results.join("report");
    let mut sum = ReportSummary::default();
    let step = |r: Result<()>, what: &str, missing: &mut Vec<String>| {
        if let Err(e) = r {
            missing.push(format!("{what} (unreadable: {e})"));
        }
    };

    let rs = results.join("repr_sweep.csv");
    if rs.is_file() {
        let r = repr_sweep_report(&rs, &out, &mut sum.written);
        step(r, "repr_sweep.csv", &mut sum.missing);
    } else {
        sum.missing.push("repr_sweep.csv".into());
    }

    let grids: Vec<PathBuf> = files_matching(results, "grid_search_", "").into_iter().filter(|p| p.is_dir()).collect();
    if grids.is_empty() {
        sum.missing.push("grid_search_*/".into());
    }
    for g in grids {
        let r = grid_report(&g, &out, &mut sum.written, &mut sum.missing);
        step(r, &g.display().to_string(), &mut sum.missing);
    }

    let unc = files_matching(results, "uncertainty_", ".csv");
    if unc.is_empty() {
        sum.missing.push("uncertainty_*.csv".into());
    }
    for u in unc {
        let r = uncertainty_report(&u, &out, &mut sum.written);
        step(r, &u.display().to_string(), &mut sum.missing);
    }

    let fits = files_matching(results, "trainsize_", "_fit.csv");
    if fits.is_empty() {
        sum.missing.push("trainsize_*_fit.csv".into());
    } else {
        let mut text = String::from("source,exponent,intercept,points\n");
        for f in &fits {
            match read_csv(f) {
                Ok((_, rows)) => {
                    for r in rows {
                        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                        let _ = writeln!(text, "{stem},{}", r[1..].join(","));
                    }
                }
                Err(e) => sum.missing.push(format!("{} (unreadable: {e})", f.display())),
            }
        }
        let path = out.join("trainsize_fits.csv");
        write_text(&path, &text)?;
        sum.written.push(path);
    }

    let ce = results.join("cross_eval.csv");
    if ce.is_file() {
        let r = cross_report(&ce, &out, &mut sum.written);
        step(r, "cross_eval.csv", &mut sum.missing);
    } else {
        sum.missing.push("cross_eval.csv".into());
    }

    for v in vtk_volumes {
        match crate::volume::read_volume(v) {
            Ok((grid, kind)) => {
                let mask = crate::repr::binarize(&crate::repr::InterfaceField::new(grid, kind));
                let stem = v.file_stem().and_then(|s| s.to_str()).unwrap_or("volume");
                let path = out.join(format!("{stem}.vtk"));
                export_vtk(&path, &mask, &format!("phase mask of {stem}"))?;
                sum.written.push(path);
            }
            Err(e) => sum.missing.push(format!("{} (unreadable: {e})", v.display())),
        }
    }

    let notes = out.join("NOTES.txt");
    write_text(
        &notes,
        "Hausdorff distances are measured between interface voxel centres and normalized by the domain diagonal.\n\
         Sweeps ran at the configured scale; full-scale numbers need the original simulation data and budget.\n",
    )?;
    sum.written.push(notes);

    let mut manifest = String::from("written:\n");
    for p in &sum.written {
        let rel = p.strip_prefix(&out).unwrap_or(p);
        let _ = writeln!(manifest, "  {}", rel.display());
    }
    manifest.push_str("missing:\n");
    for m in &sum.missing {
        let _ = writeln!(manifest, "  {m}");
    }
    write_text(&out.join("manifest.txt"), &manifest)?;
    Ok(sum)
}
