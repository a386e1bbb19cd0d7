//! gnuplot scripts and data for finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::commands::{MatherReport, TransportCertificate};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, OutputDir, RunLog};

pub const EMPTY_MASK_NOTE: &str = "empty transport set";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotSummary {
    pub files: Vec<PathBuf>,
}

fn require(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.display().to_string()))
    }
}

fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    require(path)?;
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::MissingArtifact(format!("{}: no column {name:?}", path.display())))
}

fn preamble(title: &str, png: &str, separator: &str) -> String {
    format!("set terminal pngcairo size 900,600\nset output '{png}'\nset title '{title}'\nset datafile separator {separator}\n")
}

fn plot_transport(root: &Path, out: &OutputDir) -> CliResult<Vec<PathBuf>> {
    let cert_path = root.join("certificate.json");
    let text = std::fs::read_to_string(&cert_path).map_err(|e| CliError::io(&cert_path, e))?;
    let cert: TransportCertificate = serde_json::from_str(&text)?;
    let mut files = Vec::new();

    // u − ŭ: one block per slice, x against t (first coordinate in 2-D)
    let hj_path = root.join("hj.csv");
    let (header, rows) = read_table(&hj_path)?;
    let (ct, cx, cg, cm) = (
        column(&header, "t", &hj_path)?,
        column(&header, "x1", &hj_path)?,
        column(&header, "gap", &hj_path)?,
        column(&header, "mask", &hj_path)?,
    );
    let mut data = String::from("# x1 t gap mask\n");
    let mut last_t: Option<&str> = None;
    for r in &rows {
        if last_t.is_some_and(|t| t != r[ct]) {
            data.push('\n');
        }
        last_t = Some(&r[ct]);
        let _ = writeln!(data, "{} {} {} {}", r[cx], r[ct], r[cg], r[cm]);
    }
    files.push(out.write_text("hj_gap.dat", &data)?);
    let mut gp = preamble("u - u_back", "hj_gap.png", "whitespace");
    gp.push_str("set xlabel 'x'\nset ylabel 't'\nset view map\nunset key\n");
    if cert.empty_transport_set {
        let _ = writeln!(gp, "set label 1 '{EMPTY_MASK_NOTE}' at graph 0.5,0.5 center front");
    }
    gp.push_str("splot 'hj_gap.dat' using 1:2:3 with pm3d, '' using 1:2:($4 > 0 ? 0 : 1/0) with points pt 7 ps 0.3 lc rgb 'black'\n");
    files.push(out.write_text("hj_gap.gp", &gp)?);

    // particle trajectories
    let index_path = root.join("particles.csv");
    let (header, rows) = read_table(&index_path)?;
    let cf = column(&header, "file", &index_path)?;
    let mut gp = preamble("particle trajectories", "trajectories.png", "','");
    gp.push_str("set xlabel 'x (lifted)'\nset ylabel 't'\nunset key\nplot \\\n");
    let entries: Vec<String> = rows
        .iter()
        .map(|r| {
            require(&root.join(&r[cf]))?;
            Ok(format!("  '../{}' skip 1 using 2:1 with lines", r[cf]))
        })
        .collect::<CliResult<_>>()?;
    if entries.is_empty() {
        gp.push_str("  NaN notitle\n");
    } else {
        gp.push_str(&entries.join(", \\\n"));
        gp.push('\n');
    }
    files.push(out.write_text("trajectories.gp", &gp)?);

    // μ_t snapshots, one data block per sample time
    let mu_path = root.join("mu_t.csv");
    let (header, rows) = read_table(&mu_path)?;
    let (ct, cx, cw) = (
        column(&header, "t", &mu_path)?,
        column(&header, "x1", &mu_path)?,
        column(&header, "weight", &mu_path)?,
    );
    let mut data = String::new();
    let mut times: Vec<String> = Vec::new();
    for r in &rows {
        if times.last() != Some(&r[ct]) {
            if !times.is_empty() {
                data.push_str("\n\n");
            }
            times.push(r[ct].clone());
            let _ = writeln!(data, "# t = {}", r[ct]);
        }
        let _ = writeln!(data, "{} {}", r[cx], r[cw]);
    }
    files.push(out.write_text("mu_t.dat", &data)?);
    let mut gp = preamble("mu_t snapshots", "mu_t.png", "whitespace");
    gp.push_str("set xlabel 'x'\nset ylabel 'mass'\nset xrange [0:1]\nplot \\\n");
    let entries: Vec<String> = times
        .iter()
        .enumerate()
        .map(|(i, t)| format!("  'mu_t.dat' index {i} using 1:2 with impulses lw 2 title 't = {t}'"))
        .collect();
    gp.push_str(&entries.join(", \\\n"));
    gp.push('\n');
    files.push(out.write_text("mu_t.gp", &gp)?);
    Ok(files)
}

fn plot_mather(root: &Path, out: &OutputDir) -> CliResult<Vec<PathBuf>> {
    let path = root.join("mather.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let report: MatherReport = serde_json::from_str(&text)?;
    let mut data = String::from("# x1 v1 mass\n");
    for a in &report.solution.m0 {
        let _ = writeln!(data, "{} {} {}", num(a.x[0]), num(a.v[0]), num(a.mass));
    }
    let mut files = vec![out.write_text("mather_phase.dat", &data)?];
    let mut gp = preamble(&format!("Mather measure, alpha = {}", num(report.alpha)), "mather_phase.png", "whitespace");
    gp.push_str(
        "set xlabel 'x'\nset ylabel 'v'\nset xrange [0:1]\nunset key\n\
         plot 'mather_phase.dat' using 1:2:(0.5 + 3 * sqrt($3)) with points pt 7 ps variable\n",
    );
    files.push(out.write_text("mather_phase.gp", &gp)?);
    Ok(files)
}

/// Scripts for every run found in the output directory. At least one of a
/// transport or a Mather run must be present.
pub fn cmd_plot(cfg: &RunConfig) -> CliResult<PlotSummary> {
    let root = &cfg.output.directory;
    let has_transport = root.join("certificate.json").is_file();
    let has_mather = root.join("mather.json").is_file();
    if !has_transport && !has_mather {
        return Err(CliError::MissingArtifact(format!(
            "no transport or mather run in {}",
            root.display()
        )));
    }
    let log = RunLog::open(root, "plot")?;
    let out = OutputDir::create(&root.join("plots"))?;
    let mut files = Vec::new();
    if has_transport {
        files.extend(plot_transport(root, &out)?);
    }
    if has_mather {
        files.extend(plot_mather(root, &out)?);
    }
    log.line(format!("wrote {} files", files.len()));
    Ok(PlotSummary { files })
}
