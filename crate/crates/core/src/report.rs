//! CSV, graymap and text renderings of a [`SessionReport`].

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::analysis::SessionReport;
use crate::model::{surface_of, OTH};

/// An input file echoed in `report.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Leaf-AOI dwell percentages, one row per AOI and segment.
pub fn pdt_csv(r: &SessionReport) -> String {
    let mut s = String::from("session,segment,aoi,pdt_percent\n");
    for seg in &r.segments {
        for (aoi, v) in &seg.pdt.entries {
            let _ = writeln!(s, "{},{},{},{}", r.session, seg.segment.name, aoi, v);
        }
    }
    s
}

/// Dwell percentages with children folded into their surfaces.
pub fn pdt_surface_csv(r: &SessionReport) -> String {
    let mut s = String::from("session,segment,surface,pdt_percent\n");
    for seg in &r.segments {
        for (aoi, v) in &seg.pdt.by_surface().entries {
            let _ = writeln!(s, "{},{},{},{}", r.session, seg.segment.name, aoi, v);
        }
    }
    s
}

pub fn bands_csv(r: &SessionReport) -> String {
    let mut s = String::from("session,segment,lf_mean,hf_mean,ratio,fluctuation_index,closure_fraction\n");
    for seg in &r.segments {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.session,
            seg.segment.name,
            opt(seg.bands.map(|b| b.lf_mean)),
            opt(seg.bands.map(|b| b.hf_mean)),
            opt(seg.bands.map(|b| b.ratio)),
            opt(seg.fluctuation_index),
            opt(seg.closure_fraction),
        );
    }
    s
}

pub fn perf_csv(r: &SessionReport) -> String {
    let mut s = String::from("session,segment,metric,axis,value\n");
    for seg in &r.segments {
        let Some(p) = &seg.perf else { continue };
        let name = &seg.segment.name;
        for (metric, v) in [
            ("rmse_altitude_ft", p.rmse_altitude_ft),
            ("rmse_airspeed_kt", p.rmse_airspeed_kt),
            ("rmse_heading_deg", p.rmse_heading_deg),
            ("heading_target_deg", p.heading_target_deg),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{},{},{},,{}", r.session, name, metric, v);
            }
        }
        for (axis, w) in &p.piw {
            let _ = writeln!(s, "{},{},piw_aggressiveness,{},{}", r.session, name, axis, w.aggressiveness);
            let _ = writeln!(s, "{},{},piw_duty_cycle,{},{}", r.session, name, axis, w.duty_cycle);
        }
        for (axis, series) in &p.power_frequency {
            let vals: Vec<f64> = series.iter().filter_map(|x| x.1).collect();
            if !vals.is_empty() {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let _ = writeln!(s, "{},{},power_frequency_mean_hz,{},{}", r.session, name, axis, m);
            }
        }
    }
    s
}

pub fn power_frequency_csv(r: &SessionReport) -> String {
    let mut s = String::from("session,segment,axis,t_s,hz\n");
    for seg in &r.segments {
        let Some(p) = &seg.perf else { continue };
        for (axis, series) in &p.power_frequency {
            for (t, hz) in series {
                let _ = writeln!(s, "{},{},{},{},{}", r.session, seg.segment.name, axis, t, opt(*hz));
            }
        }
    }
    s
}

pub fn stats_csv(r: &SessionReport) -> String {
    let mut s = String::from("comparison,statistic,value,p,effect_size\n");
    for row in &r.stats {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.comparison,
            row.statistic,
            row.value,
            opt(row.p),
            opt(row.effect_size)
        );
    }
    s
}

pub fn fixations_csv(r: &SessionReport) -> String {
    let mut s = String::from("session,segment,t_start_ms,t_end_ms,aoi,surface,u,v\n");
    for seg in &r.segments {
        for f in &seg.fixations {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.session,
                seg.segment.name,
                f.t_start_ms,
                f.t_end_ms,
                f.aoi_id,
                f.centroid_surface.as_deref().unwrap_or(""),
                opt(f.centroid_uv.map(|p| p.0)),
                opt(f.centroid_uv.map(|p| p.1)),
            );
        }
    }
    s
}

pub fn transitions_csv(r: &SessionReport) -> String {
    let mut s = String::from("from,to,count\n");
    let t = &r.transitions;
    for (i, a) in t.ids.iter().enumerate() {
        for (j, b) in t.ids.iter().enumerate() {
            if t.counts[i][j] > 0 {
                let _ = writeln!(s, "{a},{b},{}", t.counts[i][j]);
            }
        }
    }
    s
}

/// Human-readable summary that also lists every parameter used.
pub fn report_txt(r: &SessionReport, inputs: &[InputFile]) -> String {
    let p = &r.params;
    let mut s = String::new();
    let _ = writeln!(s, "session: {}", r.session);
    let _ = writeln!(s, "gaze samples: {}  flight samples: {}", r.gaze_samples, r.flight_samples);
    let _ = writeln!(s, "\n[inputs]");
    for i in inputs {
        let _ = writeln!(s, "{}: {} sha256={}", i.role, i.path, i.sha256);
    }
    let _ = writeln!(s, "\n[parameters]");
    let w = &p.pupil.welch;
    for (k, v) in [
        ("gaze_offset_ms", p.gaze_offset_ms.to_string()),
        ("quality_floor", p.quality_floor.to_string()),
        ("dispersion_deg", p.fixation.dispersion_deg.to_string()),
        ("min_fixation_ms", p.fixation.min_dur_ms.to_string()),
        ("gap_tolerance_ms", p.gap_tolerance_ms.to_string()),
        ("bin_px", p.bin_px.to_string()),
        ("map_mode", p.map_mode.name().to_string()),
        ("normalization", format!("{:?}", p.pupil.basis).to_lowercase()),
        ("resample_hz", p.pupil.resample_hz.to_string()),
        ("max_gap_ms", p.pupil.max_gap_ms.to_string()),
        ("smooth_window", p.pupil.smooth_window.to_string()),
        ("welch_segment", w.seg_len.to_string()),
        ("welch_overlap", w.overlap_frac.to_string()),
        ("welch_taper", w.taper.name().to_string()),
        ("highpass_cutoff_hz", p.pupil.highpass_cutoff_hz.to_string()),
        ("highpass_order", p.pupil.highpass_order.to_string()),
        ("closed_threshold", p.closed_threshold.to_string()),
        ("motion_threshold", p.perf.motion_threshold.to_string()),
        ("power_frequency_window_s", p.perf.pf_window_s.to_string()),
        ("power_frequency_hop_s", p.perf.pf_hop_s.to_string()),
        ("heading_reference_ms", p.perf.heading_reference_ms.to_string()),
        ("alpha", p.alpha.to_string()),
        ("t_test", format!("{:?}", p.t_test).to_lowercase()),
        ("segment", p.segment.clone().unwrap_or_else(|| "all".into())),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }

    for seg in &r.segments {
        let g = &seg.segment;
        let _ = writeln!(s, "\n[segment {}] {} .. {} ms", g.name, g.t_start_ms, g.t_end_ms);
        let mut top: Vec<(&String, &f64)> = seg.pdt.entries.iter().collect();
        top.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
        let _ = write!(s, "PDT:");
        for (aoi, v) in top.iter().filter(|e| *e.1 > 0.0) {
            let _ = write!(s, " {aoi} {v:.2}%");
        }
        let _ = writeln!(s);
        let surfaces: Vec<String> = seg
            .pdt
            .by_surface()
            .entries
            .iter()
            .filter(|(k, _)| k.as_str() != OTH && surface_of(k) == k.as_str())
            .map(|(k, v)| format!("{k} {v:.2}%"))
            .collect();
        let _ = writeln!(s, "surfaces: {}", surfaces.join(" "));
        let _ = writeln!(s, "fixations: {}", seg.fixations.len());
        if let Some(b) = seg.bands {
            let _ = writeln!(s, "pupil lf {:.6} hf {:.6} lf/hf {:.4}", b.lf_mean, b.hf_mean, b.ratio);
        }
        if let Some(f) = seg.fluctuation_index {
            let _ = writeln!(s, "fatigue fluctuation index {f:.6e}");
        }
        if let Some(c) = seg.closure_fraction {
            let _ = writeln!(s, "eye closure fraction {c:.4}");
        }
        if let Some(p) = &seg.perf {
            for (k, v) in [
                ("altitude ft", p.rmse_altitude_ft),
                ("airspeed kt", p.rmse_airspeed_kt),
                ("heading deg", p.rmse_heading_deg),
            ] {
                if let Some(v) = v {
                    let _ = writeln!(s, "rmse {k}: {v:.3}");
                }
            }
            for (axis, w) in &p.piw {
                let _ = writeln!(s, "piw {axis}: aggressiveness {:.4}/s duty {:.3}", w.aggressiveness, w.duty_cycle);
            }
        }
        for n in &seg.notes {
            let _ = writeln!(s, "note: {n}");
        }
    }

    if !r.stats.is_empty() {
        let _ = writeln!(s, "\n[statistics]");
        for row in &r.stats {
            let _ = writeln!(
                s,
                "{} {} = {:.4}{}{}",
                row.comparison,
                row.statistic,
                row.value,
                row.p.map(|p| format!(" p = {p:.4}")).unwrap_or_default(),
                row.effect_size.map(|e| format!(" effect = {e:.4}")).unwrap_or_default(),
            );
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes every report file into `dir` and returns their paths.
pub fn write_report(dir: &Path, r: &SessionReport, inputs: &[InputFile]) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> io::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put("pdt.csv".into(), pdt_csv(r).into_bytes())?;
    put("pdt_surface.csv".into(), pdt_surface_csv(r).into_bytes())?;
    put("bands.csv".into(), bands_csv(r).into_bytes())?;
    put("perf.csv".into(), perf_csv(r).into_bytes())?;
    put("power_frequency.csv".into(), power_frequency_csv(r).into_bytes())?;
    put("stats.csv".into(), stats_csv(r).into_bytes())?;
    put("fixations.csv".into(), fixations_csv(r).into_bytes())?;
    put("transitions.csv".into(), transitions_csv(r).into_bytes())?;
    for g in &r.fixation_maps {
        let id = file_safe(&g.surface_id);
        put(format!("fixmap_{id}.csv"), g.to_csv().into_bytes())?;
        put(format!("fixmap_{id}.pgm"), g.to_pgm())?;
    }
    for seg in &r.segments {
        if let Some(spec) = &seg.spectrum {
            put(format!("spectrum_{}.csv", file_safe(&seg.segment.name)), spec.to_csv().into_bytes())?;
        }
    }
    put("report.txt".into(), report_txt(r, inputs).into_bytes())?;
    Ok(written)
}
