//! Read a CSV with a header and timestamp column, split it chronologically
//! and cut sliding windows without dropping the last partial batch.
//!
//! cargo run --example csv_windows

use dag_forecast::data::{read_csv, split, window, window_count, Batch};

fn main() -> dag_forecast::Result<()> {
    let mut text = String::from("date,temp,humidity,load\n");
    for h in 0..400 {
        let t = h as f64;
        text += &format!(
            "2024-01-{:02} {:02}:00,{:.3},{:.3},{:.3}\n",
            1 + h / 24,
            h % 24,
            (t / 24.0 * std::f64::consts::TAU).sin(),
            0.5 + 0.01 * t,
            2.0 + (t / 12.0).cos()
        );
    }
    // the last column is the endogenous target
    let ds = read_csv(text.as_bytes(), 1)?;
    println!(
        "exogenous {:?}, endogenous {:?}",
        &ds.names[..ds.exo_count()],
        &ds.names[ds.exo_count()..]
    );

    let ranges = split(ds.len, [7, 1, 2])?;
    let (t, f) = (24, 6);
    for (name, r) in [("train", &ranges.train), ("val", &ranges.val), ("test", &ranges.test)] {
        println!(
            "{name:>5}: steps {:>3}..{:<3} -> {} windows (len - T - F + 1)",
            r.start,
            r.end,
            window_count(r.len(), t, f)
        );
    }

    let test = window(&ds, ranges.test.clone(), t, f);
    let refs: Vec<_> = test.iter().collect();
    let batch = Batch::from_samples(&refs, ds.endo_count, ds.exo_count())?;
    println!(
        "test batch: {} windows, X^exo {} values, Y^exo {} values, X^endo {}, Y^endo {}",
        batch.size,
        batch.x_exo.len(),
        batch.y_exo.as_ref().map_or(0, Vec::len),
        batch.x_endo.len(),
        batch.y_endo.as_ref().map_or(0, Vec::len)
    );
    Ok(())
}
