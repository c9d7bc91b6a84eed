//! AP, MAP, precision at K and the radius-swept PR curve on a small fixture.

use dadh::retrieval::{average_precision, evaluate, pr_curve, EvalInput, HammingIndex};
use dadh::CodeMatrix;
use ndarray::array;

fn main() -> dadh::Result<()> {
    println!("AP [1,0,1,0] = {:.6}", average_precision(&[true, false, true, false]));

    let db = CodeMatrix::pack(
        array![
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0],
            [-1.0, -1.0, -1.0, -1.0],
            [-1.0, -1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0],
        ]
        .view(),
    )?;
    let db_labels = vec![vec![0], vec![0], vec![1], vec![1], vec![1], vec![0, 1]];
    let queries = CodeMatrix::pack(array![[1.0, 1.0, 1.0, 1.0], [-1.0, -1.0, -1.0, -1.0]].view())?;
    let query_labels = vec![vec![0], vec![1]];
    let index = HammingIndex::new(db);
    let input = EvalInput::new(&queries, &query_labels, &index, &db_labels)?;

    let m = evaluate(&input, 3)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    print!("{}", pr_curve(&input)?.to_csv());
    Ok(())
}
