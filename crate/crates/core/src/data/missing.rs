use super::spec::VariableSpec;
use super::stream::DataStream;

/// Appends a binary `<name>NA` column for every variable with a missing value.
///
/// Variables that already have an indicator, and indicators themselves, are skipped,
/// so the operation is idempotent.
pub fn add_missingness_indicators(ds: &DataStream) -> DataStream {
    let j = ds.n_vars();
    let has_indicator = |name: &str| {
        ds.variables
            .iter()
            .any(|v| v.indicator_of.as_deref() == Some(name))
    };
    let sources: Vec<usize> = (0..j)
        .filter(|&k| {
            let v = &ds.variables[k];
            !v.is_missing_indicator() && !has_indicator(&v.name) && ds.column(k).any(|x| x.is_none())
        })
        .collect();
    if sources.is_empty() {
        return ds.clone();
    }
    let mut out = ds.clone();
    for &k in &sources {
        let mut v = VariableSpec::binary(format!("{}NA", ds.variables[k].name));
        v.indicator_of = Some(ds.variables[k].name.clone());
        out.variables.push(v);
    }
    for day in out.days.iter_mut() {
        for row in day.rows.iter_mut() {
            let flags: Vec<Option<f64>> = sources
                .iter()
                .map(|&k| Some(if row[k].is_none() { 1.0 } else { 0.0 }))
                .collect();
            row.extend(flags);
        }
    }
    out
}

/// Removes variables whose observed values are all identical (or all missing).
pub fn drop_zero_variance(ds: &DataStream) -> (DataStream, Vec<String>) {
    let keep: Vec<usize> = (0..ds.n_vars())
        .filter(|&k| {
            let mut it = ds.column(k).flatten();
            match it.next() {
                None => false,
                Some(first) => it.any(|x| x != first),
            }
        })
        .collect();
    let dropped: Vec<String> = (0..ds.n_vars())
        .filter(|k| !keep.contains(k))
        .map(|k| ds.variables[k].name.clone())
        .collect();
    for name in &dropped {
        log::warn!("dropping zero-variance variable `{name}`");
    }
    let mut out = ds.clone();
    out.variables = keep.iter().map(|&k| ds.variables[k].clone()).collect();
    for day in out.days.iter_mut() {
        for row in day.rows.iter_mut() {
            *row = keep.iter().map(|&k| row[k]).collect();
        }
    }
    (out, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stream::DayBatch;

    fn stream(rows: Vec<Vec<Option<f64>>>) -> DataStream {
        let j = rows[0].len();
        let vars = (0..j).map(|k| VariableSpec::continuous(format!("v{k}"))).collect();
        DataStream::new(vars, vec![DayBatch { day: 1, rows }]).unwrap()
    }

    #[test]
    fn indicator_marks_missing_rows() {
        let rows: Vec<Vec<Option<f64>>> = (0..6)
            .map(|i| vec![if i == 2 || i == 5 { None } else { Some(i as f64) }, Some(1.0)])
            .collect();
        let ds = stream(rows);
        let out = add_missingness_indicators(&ds);
        assert_eq!(out.n_vars(), 3);
        assert_eq!(out.variables[2].name, "v0NA");
        let flags: Vec<f64> = out.column(2).map(|x| x.unwrap()).collect();
        assert_eq!(flags, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn no_missing_is_identity_and_idempotent() {
        let ds = stream(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]]);
        assert_eq!(add_missingness_indicators(&ds), ds);
        let ds = stream(vec![vec![None, Some(2.0)], vec![Some(3.0), Some(4.0)]]);
        let once = add_missingness_indicators(&ds);
        assert_eq!(add_missingness_indicators(&once), once);
    }

    #[test]
    fn zero_variance_columns_dropped() {
        let ds = stream(vec![vec![Some(1.0), Some(2.0)], vec![Some(1.0), Some(4.0)]]);
        let (out, dropped) = drop_zero_variance(&ds);
        assert_eq!(dropped, vec!["v0".to_string()]);
        assert_eq!(out.n_vars(), 1);
    }
}
